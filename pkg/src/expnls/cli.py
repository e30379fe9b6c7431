"""Command-line front end.

    expnls profile --omega 1 --mu 0 --out runs/
    expnls spectrum --omega 2 --mu 1
    expnls unstable-mode --omega 1 --mu 1
    expnls evolve --omega 1 --lambdas 1.05 --t-end 0.1
    expnls blowup --omega 1 --mu 0 --lambdas 1.02,1.05,1.10
    expnls sweep --omega 1,2 --mu 0,1
    expnls verify --omega 1 --mu 0

Exit codes: 0 ok, 1 solver error, 2 identity/invariant failure, 64 usage.
A flat TOML file given by --config supplies defaults; flags win.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import io
from .grid import RadialField, make_grid
from .model import ModelParams

log = logging.getLogger("expnls")

EXIT_OK, EXIT_SOLVER, EXIT_IDENTITY, EXIT_USAGE = 0, 1, 2, 64

# r_max·√ω used when --rmax is absent
PROFILE_WIDTH = 20.0
SPECTRAL_WIDTH = 10.0
DEFAULT_N = 8192
IDENTITY_TOL = 1e-6
MIN_WIDTH = 8.0


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    omega: list = field(default_factory=list)
    mu: list = field(default_factory=lambda: [0])
    rmax: Optional[float] = None
    n: int = DEFAULT_N
    dt: Optional[float] = None
    t_end: Optional[float] = None
    lambdas: list = field(default_factory=lambda: [1.02, 1.05, 1.10])
    out: str = "."
    identity_tol: float = IDENTITY_TOL

    def validate(self) -> None:
        if not self.omega:
            raise UsageError("--omega is required")
        for w in self.omega:
            if not (w > 0 and math.isfinite(w)):
                raise UsageError(f"omega must be positive, got {w}")
        for m in self.mu:
            if m not in (0, 1):
                raise UsageError(f"mu must be 0 or 1, got {m}")
        if self.rmax is not None and not self.rmax > 0:
            raise UsageError("--rmax must be positive")
        if self.rmax is not None and self.rmax * math.sqrt(min(self.omega)) < MIN_WIDTH:
            raise UsageError(f"--rmax must satisfy rmax·√ω ≥ {MIN_WIDTH:g}")
        if self.n < 16:
            raise UsageError("--n must be at least 16")
        for name in ("dt", "t_end"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if any(not lam > 0 for lam in self.lambdas):
            raise UsageError("lambdas must be positive")

    def cases(self):
        return [(w, m) for w in self.omega for m in self.mu]

    def single(self):
        if len(self.omega) != 1 or len(self.mu) != 1:
            raise UsageError(f"{self.command} takes a single --omega and --mu")
        return self.omega[0], self.mu[0]

    def grid(self, omega, width=PROFILE_WIDTH):
        r = self.rmax if self.rmax is not None else width / math.sqrt(omega)
        return make_grid(r, self.n)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(s: str) -> list:
    try:
        return [float(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _ints(s: str) -> list:
    try:
        return [int(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")


COMMANDS = ("profile", "spectrum", "unstable-mode", "evolve", "blowup", "sweep", "verify")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="expnls", description="Solitons of the exponential 2D NLS.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--omega", type=_floats)
        sp.add_argument("--mu", type=_ints)
        sp.add_argument("--rmax", type=float)
        sp.add_argument("--n", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--t-end", dest="t_end", type=float)
        sp.add_argument("--lambdas", type=_floats)
        sp.add_argument("--out")
        sp.add_argument("--config")
    return ap


def _as_list(v, conv):
    if isinstance(v, (list, tuple)):
        return [conv(x) for x in v]
    if isinstance(v, str):
        return [conv(x) for x in v.split(",") if x.strip()]
    return [conv(v)]


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge the TOML file (if any) with flags; flags win."""
    values = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        known = {f.name for f in fields(RunConfig)} - {"command"}
        for k, v in raw.items():
            k = k.replace("-", "_")
            if k not in known:
                raise UsageError(f"unknown config key {k!r}")
            values[k] = v
    for k in ("omega", "mu", "rmax", "n", "dt", "t_end", "lambdas", "out"):
        v = getattr(args, k)
        if v is not None:
            values[k] = v
    try:
        if "omega" in values:
            values["omega"] = _as_list(values["omega"], float)
        if "mu" in values:
            values["mu"] = _as_list(values["mu"], int)
        if "lambdas" in values:
            values["lambdas"] = _as_list(values["lambdas"], float)
        for k in ("rmax", "dt", "t_end", "identity_tol"):
            if k in values:
                values[k] = float(values[k])
        if "n" in values:
            values["n"] = int(values["n"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config value: {exc}")
    cfg = RunConfig(command=args.command, **values)
    cfg.validate()
    return cfg


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EXPNLS_THREADS", "1")))
    except ValueError:
        return 1


def _tag(omega, mu) -> str:
    return f"w{omega:g}_mu{mu}"


# ------------------------------------------------------------- commands

def _profile(cfg: RunConfig, omega, mu, width=PROFILE_WIDTH):
    from .profile import SolverConfig, shoot_profile
    return shoot_profile(ModelParams(omega, mu), cfg.grid(omega, width),
                         SolverConfig(min_width=MIN_WIDTH))


def profile_checks(sol, tol) -> dict:
    return {
        "pohozaev_42": abs(sol.pohozaev_42_residual) < tol,
        "pohozaev_45": abs(sol.pohozaev_45_residual) < tol,
        "grad_below_one": 0.0 < sol.grad_norm_sq < 1.0,
        "decay_rate": abs(sol.decay_rate_fit - math.sqrt(sol.params.omega))
        < 0.02 * math.sqrt(sol.params.omega),
    }


def cmd_profile(cfg: RunConfig) -> int:
    omega, mu = cfg.single()
    sol = _profile(cfg, omega, mu)
    out = Path(cfg.out)
    sol.save(out / f"profile_{_tag(omega, mu)}.json", out / f"profile_{_tag(omega, mu)}.csv")
    checks = profile_checks(sol, cfg.identity_tol)
    for k, v in checks.items():
        print(f"{k:16s} {'ok' if v else 'FAILED'}")
    print(f"amplitude {sol.amplitude:.10f}  ‖∇φ‖² {sol.grad_norm_sq:.10f}  "
          f"r42 {sol.pohozaev_42_residual:.2e}  r45 {sol.pohozaev_45_residual:.2e}  "
          f"rate {sol.decay_rate_fit:.6f}")
    return EXIT_OK if all(checks.values()) else EXIT_IDENTITY


def _spectrum_obj(cfg, omega, mu):
    from .spectral import krein_count, spectral_report
    sol = _profile(cfg, omega, mu, SPECTRAL_WIDTH)
    rep = spectral_report(sol)
    verdict = krein_count(rep)
    obj = {"omega": omega, "mu": mu, **rep.to_json_obj(),
           "krein": dict(verdict.__dict__),
           "grid": {"r_max": sol.grid.r_max, "n": sol.grid.n}}
    om = omega
    good = (rep.morse_minus == 0 and rep.morse_plus == 1
            and abs(rep.lminus_ground_eig) < 1e-5 * om
            and abs(rep.lplus_kernel_eig_l1) < 1e-5 * om
            and rep.psi_form < 0 and rep.psi_orth_residual < 1e-6)
    return obj, good


def cmd_spectrum(cfg: RunConfig) -> int:
    omega, mu = cfg.single()
    obj, good = _spectrum_obj(cfg, omega, mu)
    io.write_json(Path(cfg.out) / f"spectrum_{_tag(omega, mu)}.json", obj)
    print(f"n(L+)={obj['morse_plus']} n(L-)={obj['morse_minus']} "
          f"slope={obj['vk_slope']:.6g} ⟨L+Ψ,Ψ⟩={obj['psi_form']:.6g} "
          f"unstable={obj['krein']['unstable']}")
    return EXIT_OK if good else EXIT_IDENTITY


def cmd_unstable_mode(cfg: RunConfig) -> int:
    from .stability import unstable_mode_report
    omega, mu = cfg.single()
    sol = _profile(cfg, omega, mu)
    rep = unstable_mode_report(sol)
    io.write_json(Path(cfg.out) / f"unstable_mode_{_tag(omega, mu)}.json", rep.to_json_obj())
    print(f"λ={rep.lam:.8g} residual={rep.residual:.2e} "
          f"dynamics fit={rep.lambda_dynamics_fit:.6g} ({rep.agreement_pct:.2f}%)")
    good = rep.lam > 0 and rep.residual < 1e-6 and rep.agreement_pct < 10.0
    return EXIT_OK if good else EXIT_IDENTITY


def _dyn_cfg(cfg: RunConfig):
    from .dynamics import DynamicsConfig
    return DynamicsConfig(dt=cfg.dt, t_end=cfg.t_end)


def cmd_evolve(cfg: RunConfig) -> int:
    from .dynamics import evolve, scaled_datum
    omega, mu = cfg.single()
    lam = cfg.lambdas[0] if cfg.lambdas else 1.0
    sol = _profile(cfg, omega, mu)
    fld = scaled_datum(sol, lam)
    rep = evolve(RadialField(fld.grid, fld.values.astype(complex)), sol.params, _dyn_cfg(cfg))
    out = Path(cfg.out)
    tag = f"{_tag(omega, mu)}_lam{lam:g}"
    rep.to_csv(out / f"trajectory_{tag}.csv")
    io.write_json(out / f"trajectory_{tag}.json", {
        "omega": omega, "mu": mu, "lambda": lam, "outcome": rep.outcome.value,
        "blowup_time_estimate": rep.blowup_time_estimate,
        "mass_drift": rep.mass_drift(), "energy_drift": rep.energy_drift(),
        "virial_identity_residual": rep.virial_identity_residual,
        "t_final": rep.states[-1].t})
    print(f"{rep.outcome.value} t={rep.states[-1].t:.6g} mass drift {rep.mass_drift():.2e} "
          f"energy drift {rep.energy_drift():.2e}")
    return EXIT_OK


def cmd_blowup(cfg: RunConfig) -> int:
    from .dynamics import blowup_experiment
    omega, mu = cfg.single()
    sol = _profile(cfg, omega, mu)
    rows = blowup_experiment(sol, cfg.lambdas, _dyn_cfg(cfg), workers=_workers())
    io.write_json(Path(cfg.out) / f"blowup_{_tag(omega, mu)}.json",
                  {"omega": omega, "mu": mu, "rows": [r.to_json_obj() for r in rows]})
    print(f"{'lambda':>7s} {'E>0':>5s} {'I<0':>5s} {'S<S0':>5s} {'kset':>8s} outcome")
    for r in rows:
        t = f" t≈{r.blowup_time_estimate:.4g}" if r.blowup_time_estimate else ""
        print(f"{r.lam:7.3f} {str(r.energy_positive):>5s} {str(r.virial_negative):>5s} "
              f"{str(r.action_below):>5s} {r.kset:>8s} {r.outcome}{t}")
    return EXIT_OK


def _sweep_row(args):
    cfg, omega, mu = args
    sol = _profile(cfg, omega, mu)
    row = {"omega": omega, "mu": mu, "amplitude": sol.amplitude,
           "grad_norm_sq": sol.grad_norm_sq, "mass": sol.mass, "action": sol.action,
           "pohozaev_42": sol.pohozaev_42_residual, "pohozaev_45": sol.pohozaev_45_residual,
           "decay_rate": sol.decay_rate_fit}
    spec, good = _spectrum_obj(cfg, omega, mu)
    row.update(morse_plus=spec["morse_plus"], morse_minus=spec["morse_minus"],
               vk_slope=spec["vk_slope"], psi_form=spec["psi_form"])
    return row, good and all(profile_checks(sol, cfg.identity_tol).values())


def cmd_sweep(cfg: RunConfig) -> int:
    jobs = [(cfg, w, m) for w, m in cfg.cases()]
    nw = min(_workers(), len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]
    rows = [r for r, _ in results]
    out = Path(cfg.out)
    io.write_json(out / "sweep.json", {"rows": rows})
    cols = list(rows[0].keys())
    io.write_csv(out / "sweep.csv", cols, ([r[c] for c in cols] for r in rows))
    for r in rows:
        print(f"ω={r['omega']:g} μ={r['mu']} φ(0)={r['amplitude']:.8f} "
              f"‖∇φ‖²={r['grad_norm_sq']:.6f} n(L+)={r['morse_plus']}")
    return EXIT_OK if all(g for _, g in results) else EXIT_IDENTITY


def cmd_verify(cfg: RunConfig) -> int:
    from .acceptance import run_all
    results = run_all(cases=cfg.cases())
    io.write_json(Path(cfg.out) / "verify.json",
                  {"cases": [list(c) for c in cfg.cases()],
                   "criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                                 "detail": r.detail} for r in results]})
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return EXIT_OK if n_fail == 0 else EXIT_IDENTITY


HANDLERS = {
    "profile": cmd_profile, "spectrum": cmd_spectrum, "unstable-mode": cmd_unstable_mode,
    "evolve": cmd_evolve, "blowup": cmd_blowup, "sweep": cmd_sweep, "verify": cmd_verify,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except UsageError as exc:
        print(f"expnls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"expnls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # solver failures of any module
        log.debug("solver error", exc_info=True)
        print(f"expnls: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
