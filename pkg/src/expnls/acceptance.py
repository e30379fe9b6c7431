"""Acceptance criteria 1-10, each evaluated at its stated tolerance.

Every ``criterion_k`` returns a :class:`CriterionResult`; ``cases`` narrows
the (ω, μ) set so the CLI can verify a single pair.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import (DynamicsConfig, Outcome, blowup_row, evolve, scaled_datum)
from .grid import RadialField, make_grid
from .model import KSet, ModelParams, chi_187, witness_integrand
from .profile import SolverConfig, shoot_profile
from .spectral import (KERNEL_TOL, morse_index, psi_witness,
                       scaling_identity_residual)
from .stability import growing_mode, growth_rate_from_dynamics

# grid widths r_max·√ω per task
IDENTITY_WIDTH = 20.0
DECAY_WIDTH = 30.0
SPECTRAL_WIDTH = 10.0
DYNAMICS_WIDTH = 20.0

FOUR_CASES = [(1.0, 0), (1.0, 1), (2.0, 0), (2.0, 1)]
DECAY_CASES = [(1.0, 0), (1.0, 1), (4.0, 0), (4.0, 1)]
OMEGA1_CASES = [(1.0, 0), (1.0, 1)]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _solve(omega, mu, width, n, min_width=8.0):
    p = ModelParams(omega, mu)
    grid = make_grid(width / math.sqrt(omega), n)
    return shoot_profile(p, grid, SolverConfig(min_width=min_width))


def _pick(cases, allowed):
    if cases is None:
        return list(allowed)
    return [c for c in allowed if c in [(float(w), int(m)) for w, m in cases]]


def _timed(number, name, body) -> CriterionResult:
    t0 = time.perf_counter()
    passed, detail, metrics = body()
    if not metrics:
        detail = "no applicable (ω, μ) case"
    return CriterionResult(number, name, bool(passed), detail,
                           time.perf_counter() - t0, metrics)


# ------------------------------------------------------------------ 1-3

def criterion_1(cases=None, ns=(2048, 4096, 8192)) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, FOUR_CASES):
            t0 = time.perf_counter()
            res = []
            for n in ns:
                s = _solve(om, mu, IDENTITY_WIDTH, n)
                res.append((abs(s.pohozaev_42_residual), abs(s.pohozaev_45_residual)))
            dt = time.perf_counter() - t0
            r42, r45 = res[-1]
            rates = [math.log2(max(res[i][j], 1e-300) / max(res[i + 1][j], 1e-300))
                     for i in range(len(ns) - 1) for j in (0, 1)]
            order = min(rates)
            # residuals at the roundoff floor cannot show an order
            floor_hit = max(r42, r45) < 1e-11
            good = r42 < 1e-6 and r45 < 1e-6 and (order >= 2 or floor_hit) and dt < 30
            ok &= good
            metrics[f"{om:g},{mu}"] = dict(r42=r42, r45=r45, order=order, seconds=dt)
            parts.append(f"(ω={om:g},μ={mu}) r42={r42:.1e} r45={r45:.1e} order≥{order:.2f}")
        return ok, "; ".join(parts), metrics
    return _timed(1, "Pohozaev identities", body)


def criterion_2(cases=None, n=8192) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, FOUR_CASES):
            g = _solve(om, mu, IDENTITY_WIDTH, n).grad_norm_sq
            ok &= 0.0 < g < 1.0
            metrics[f"{om:g},{mu}"] = g
            parts.append(f"(ω={om:g},μ={mu}) ‖∇φ‖²={g:.6f}")
        return ok, "; ".join(parts), metrics
    return _timed(2, "gradient threshold", body)


def criterion_3(cases=None, n=8192) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, DECAY_CASES):
            rate = _solve(om, mu, DECAY_WIDTH, n).decay_rate_fit
            err = abs(rate - math.sqrt(om)) / math.sqrt(om)
            ok &= err < 0.02
            metrics[f"{om:g},{mu}"] = rate
            parts.append(f"(ω={om:g},μ={mu}) rate={rate:.5f} ({100 * err:.2f}%)")
        return ok, "; ".join(parts), metrics
    return _timed(3, "tail decay", body)


# ------------------------------------------------------------------ 4-6

def criterion_4(cases=None, ns=(8192, 16384)) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, FOUR_CASES):
            seen = []
            for n in ns:
                s = _solve(om, mu, SPECTRAL_WIDTH, n)
                mp = morse_index(s, "plus")
                mm = morse_index(s, "minus")
                k0 = mm.sectors[0]
                k1 = next(x for x in mp.sectors if x.l == 1)
                tol = KERNEL_TOL * om
                good = (mm.index == 0 and mp.index == 1
                        and abs(k0.kernel) < tol and abs(k1.kernel) < tol
                        and k0.kernel_alignment > 0.999 and k1.kernel_alignment > 0.999)
                seen.append((mp.index, mm.index))
                ok &= good
                metrics[f"{om:g},{mu},{n}"] = dict(
                    morse_plus=mp.index, morse_minus=mm.index,
                    lminus_kernel=k0.kernel, lplus_kernel=k1.kernel,
                    align_minus=k0.kernel_alignment, align_plus=k1.kernel_alignment)
            ok &= len(set(seen)) == 1
            m = metrics[f"{om:g},{mu},{ns[0]}"]
            parts.append(f"(ω={om:g},μ={mu}) n(L+)={m['morse_plus']} n(L-)={m['morse_minus']} "
                         f"ker={m['lminus_kernel']:.1e},{m['lplus_kernel']:.1e}")
        return ok, "; ".join(parts), metrics
    return _timed(4, "spectral claims", body)


def criterion_5(cases=None, n=8192) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        x = np.linspace(0.0, 50.0, 100001)
        chi_ok = bool(np.all(chi_187(x) >= 0))
        ok &= chi_ok
        for om, mu in _pick(cases, FOUR_CASES):
            s = _solve(om, mu, SPECTRAL_WIDTH, n)
            form, orth, closed = psi_witness(s)
            rel = abs(form - closed) / abs(closed)
            integrand_ok = bool(np.all(witness_integrand(s.phi) >= 0))
            good = orth < 1e-6 and form < 0 and rel < 1e-3 and integrand_ok
            ok &= good
            metrics[f"{om:g},{mu}"] = dict(form=form, closed=closed, orth=orth, rel=rel)
            parts.append(f"(ω={om:g},μ={mu}) ⟨L+Ψ,Ψ⟩={form:.5f} rel={rel:.1e} orth={orth:.1e}")
        parts.append(f"χ≥0 on [0,50]: {chi_ok}")
        return ok, "; ".join(parts), metrics
    return _timed(5, "Ψ witness", body)


def criterion_6(cases=None, n=8192) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, FOUR_CASES):
            r = scaling_identity_residual(_solve(om, mu, SPECTRAL_WIDTH, n))
            ok &= r < 1e-4
            metrics[f"{om:g},{mu}"] = r
            parts.append(f"(ω={om:g},μ={mu}) {r:.1e}")
        return ok, "; ".join(parts), metrics
    return _timed(6, "operator identity", body)


# ------------------------------------------------------------------ 7-10

def criterion_7(cases=None, ns=(4096, 8192)) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, OMEGA1_CASES):
            modes = []
            for n in ns:
                s = _solve(om, mu, DYNAMICS_WIDTH, n)
                modes.append((s, growing_mode(s)))
            lam = [m.lam for _, m in modes]
            drift = abs(lam[1] - lam[0]) / lam[1]
            s0, m0 = modes[0]
            fit = growth_rate_from_dynamics(s0, mode=m0)
            agree = abs(fit - m0.lam) / m0.lam
            res = max(m.residual for _, m in modes)
            good = all(l > 0 for l in lam) and res < 1e-6 and drift < 0.01 and agree < 0.10
            ok &= good
            metrics[f"{om:g},{mu}"] = dict(lam=lam, residual=res, drift=drift,
                                           fit=fit, agreement=agree)
            parts.append(f"(ω={om:g},μ={mu}) λ={lam[-1]:.6g} res={res:.1e} "
                         f"doubling {100 * drift:.3f}% fit={fit:.5g} ({100 * agree:.2f}%)")
        return ok, "; ".join(parts), metrics
    return _timed(7, "growing mode", body)


def criterion_8(cases=None, n=4096) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, OMEGA1_CASES):
            s = _solve(om, mu, DYNAMICS_WIDTH, n)
            t_end = 10.0 / om
            rep = evolve(RadialField(s.grid, s.phi.astype(complex)), s.params,
                         DynamicsConfig(t_end=t_end))
            t_reached = rep.states[-1].t
            dev = [float(np.max(np.abs(np.abs(st.field.values) - s.phi)))
                   for st in rep.states]
            stat = max(dev)
            t_hold = max((st.t for st, d in zip(rep.states, dev) if d < 1e-5), default=0.0)
            md, ed = rep.mass_drift(), rep.energy_drift()
            covered = rep.outcome is Outcome.COMPLETED and t_reached >= t_end * (1 - 1e-12)
            good = covered and md < 1e-9 and ed < 1e-6 and stat < 1e-5
            ok &= good
            metrics[f"{om:g},{mu}"] = dict(mass_drift=md, energy_drift=ed,
                                           stationarity=stat, t_reached=t_reached,
                                           stationary_until=t_hold,
                                           outcome=rep.outcome.value)
            parts.append(f"(ω={om:g},μ={mu}) mass {md:.1e} energy {ed:.1e} "
                         f"|u|-φ ≤ 1e-5 until t={t_hold:.2f}, run ended {rep.outcome.value} "
                         f"at t={t_reached:.3f} of {t_end:g}")
        return ok, "; ".join(parts), metrics
    return _timed(8, "conservation and stationarity", body)


def _blowup_time(sol, lam) -> float:
    row = blowup_row(sol, lam)
    if row.blowup_time_estimate is None:
        raise RuntimeError(f"λ={lam} did not blow up at the default step")
    return row.blowup_time_estimate


def criterion_9(cases=None, n=4096, lam=1.05, samples=25) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, OMEGA1_CASES):
            s = _solve(om, mu, DYNAMICS_WIDTH, n)
            tb = _blowup_time(s, lam)
            fld = scaled_datum(s, lam)
            u0 = RadialField(fld.grid, fld.values.astype(complex))
            res = []
            for k in (1, 2):
                se = tb / (samples * k)
                cfg = DynamicsConfig(dt=se / 50, sample_every=se, t_end=4 * tb)
                res.append(evolve(u0, s.params, cfg).virial_identity_residual)
            good = res[1] < 5e-2 and res[1] < res[0]
            ok &= good
            metrics[f"{om:g},{mu}"] = dict(residuals=res, blowup_time=tb)
            parts.append(f"(ω={om:g},μ={mu}) residual {res[0]:.1e} → {res[1]:.1e} (dt halved)")
        return ok, "; ".join(parts), metrics
    return _timed(9, "virial identity", body)


def criterion_10(cases=None, n=4096, lambdas=(1.02, 1.05, 1.10)) -> CriterionResult:
    def body():
        ok, parts, metrics = True, [], {}
        for om, mu in _pick(cases, OMEGA1_CASES):
            s = _solve(om, mu, DYNAMICS_WIDTH, n)
            cfg = DynamicsConfig()
            for lam in lambdas:
                fld = scaled_datum(s, lam)
                row = blowup_row(s, lam, run=False)
                rep = evolve(RadialField(fld.grid, fld.values.astype(complex)), s.params, cfg)
                g_end = rep.states[-1].grad_norm_sq
                good = (row.conditions_ok and row.kset == KSet.KMINUS.value
                        and rep.outcome is Outcome.BLOWUP and g_end >= 1 - cfg.delta_blowup)
                ok &= good
                metrics[f"{om:g},{mu},{lam:g}"] = dict(
                    conditions=row.conditions_ok, kset=row.kset,
                    outcome=rep.outcome.value, t=rep.blowup_time_estimate, grad_end=g_end)
                parts.append(f"(μ={mu},λ={lam:g}) {row.kset} {rep.outcome.value} "
                             f"t≈{rep.blowup_time_estimate:.4g}" if rep.blowup_time_estimate
                             else f"(μ={mu},λ={lam:g}) {row.kset} {rep.outcome.value}")
            # control: the unscaled soliton
            ctrl = evolve(RadialField(s.grid, scaled_datum(s, 1.0).values.astype(complex)),
                          s.params, cfg)
            c_ok = ctrl.outcome is Outcome.COMPLETED
            ok &= c_ok
            metrics[f"{om:g},{mu},control"] = dict(outcome=ctrl.outcome.value,
                                                   t=ctrl.blowup_time_estimate)
            parts.append(f"(μ={mu},λ=1 control) {ctrl.outcome.value}"
                         + (f" at t≈{ctrl.blowup_time_estimate:.3g}"
                            if ctrl.blowup_time_estimate else ""))
        return ok, "; ".join(parts), metrics
    return _timed(10, "blow-up instability", body)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
    9: criterion_9, 10: criterion_10,
}


def run_all(cases: Optional[Sequence] = None, which: Optional[Sequence[int]] = None,
            echo: Optional[Callable[[str], None]] = print) -> list[CriterionResult]:
    out = []
    for k in (which or sorted(CRITERIA)):
        res = CRITERIA[k](cases)
        if echo:
            echo(res.line())
        out.append(res)
    return out
