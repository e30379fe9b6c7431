"""Radial time evolution of  i u_t + Δu + f(u) = 0  and blow-up experiments.

Time stepping is Crank–Nicolson with the conservative (Delfour–Fortin–Payre)
midpoint treatment of the nonlinearity:

    (u₁ - u₀)/dt = -i [A m - N m],   m = (u₀ + u₁)/2,
    N = (G(|u₁|²) - G(|u₀|²)) / (|u₁|² - |u₀|²)

with A = -Δ on the order-4 grid.  Because A is self-adjoint in the
quadrature inner product, the discrete mass and the discrete energy
½⟨Au, u⟩ - ½∫G(|u|²) are conserved up to the fixed-point tolerance, and
e^{iω't}φ (tan(ω'dt/2) = ωdt/2) is an exact discrete trajectory.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import io
from .grid import RadialField, RadialGrid, laplacian_matrix, operator_weights
from .model import FOUR_PI, ModelParams, functionals, G_fun

TWO_PI = 2.0 * math.pi


class Outcome(str, enum.Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowupDetected"
    STEP_FAILURE = "StepFailure"


class ThresholdError(ValueError):
    """Initial datum violates ‖∇u₀‖² < 1."""


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class DynamicsConfig:
    dt: Optional[float] = None              # default 1e-3/ω
    t_end: Optional[float] = None           # default 20/ω
    sample_every: Optional[float] = None    # default 0.05/ω
    delta_blowup: float = 0.05
    fp_tol: float = 1e-12
    fp_max_iter: int = 50
    max_halvings: int = 6
    contraction: float = 0.5        # cap on dt·max V₊ per substep
    max_refine: int = 16            # substeps no shorter than dt/2^16
    order: int = 4
    nonlinear: bool = True

    def resolved(self, omega: float) -> "DynamicsConfig":
        return replace(
            self,
            dt=self.dt if self.dt is not None else 1e-3 / omega,
            t_end=self.t_end if self.t_end is not None else 20.0 / omega,
            sample_every=(self.sample_every if self.sample_every is not None
                          else 0.05 / omega))


@dataclass(frozen=True, eq=False)
class EvolutionState:
    t: float
    field: RadialField
    mass: float
    energy: float
    grad_norm_sq: float
    virial_moment: float
    virial_i: float


@dataclass(frozen=True, eq=False)
class TrajectoryReport:
    states: list
    outcome: Outcome
    blowup_time_estimate: Optional[float]
    virial_identity_residual: float
    params: Optional[ModelParams] = None
    steps: int = 0

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.states])

    def mass_drift(self) -> float:
        m = self.series("mass")
        return float(np.max(np.abs(m - m[0])) / m[0]) if m[0] > 0 else 0.0

    def energy_drift(self) -> float:
        e = self.series("energy")
        scale = max(abs(e[0]), 1e-300)
        return float(np.max(np.abs(e - e[0])) / scale)

    def to_csv(self, path) -> None:
        cols = ["t", "mass", "energy", "grad_norm_sq", "virial_moment", "virial_i"]
        io.write_csv(path, cols,
                     ([getattr(s, c) for c in cols] for s in self.states))


# ------------------------------------------------------------- discretization

def _sinhc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 + x2 / 6.0 + x2 * x2 / 120.0, np.sinh(xs) / xs)


def dfp_quotient(z0, z1, p: ModelParams) -> np.ndarray:
    """(G(z₁) - G(z₀))/(z₁ - z₀), stable as z₁ → z₀ (limit g(z))."""
    zb = 0.5 * (z0 + z1)
    dz = z1 - z0
    return np.exp(FOUR_PI * zb) * _sinhc(TWO_PI * dz) - 1.0 - FOUR_PI * p.mu * zb


class _Stepper:
    def __init__(self, grid: RadialGrid, p: ModelParams, cfg: DynamicsConfig):
        self.grid, self.p, self.cfg = grid, p, cfg
        self.A = laplacian_matrix(grid, 0, cfg.order).tocsc()
        self.w = operator_weights(grid, cfg.order)
        self._lu = {}

    def lu(self, dt):
        key = float(dt)
        if key not in self._lu:
            M = (sp.identity(self.grid.n, format="csc")
                 + 0.5j * dt * self.A).tocsc()
            self._lu[key] = spla.splu(M)
        return self._lu[key]

    def step(self, u0, dt) -> Optional[np.ndarray]:
        """One DFP step; None when the fixed-point iteration fails."""
        rhs0 = u0 - 0.5j * dt * (self.A @ u0)
        lu = self.lu(dt)
        if not self.cfg.nonlinear:
            return lu.solve(rhs0)
        z0 = np.abs(u0) ** 2
        u1 = u0.copy()
        prev = np.inf
        grow = 0
        for _ in range(self.cfg.fp_max_iter):
            with np.errstate(all="ignore"):
                N = dfp_quotient(z0, np.abs(u1) ** 2, self.p)
                new = lu.solve(rhs0 + 0.5j * dt * N * (u0 + u1))
            if not np.all(np.isfinite(new)):
                return None
            d = np.max(np.abs(new - u1))
            u1 = new
            scale = max(np.max(np.abs(u1)), 1e-300)
            if d <= self.cfg.fp_tol * scale:
                return u1
            grow = grow + 1 if d > prev else 0
            if grow >= 3:
                return None
            prev = d
        return None

    def max_step(self, u) -> float:
        """Largest dt keeping dt·max V₊(|u|) under the contraction cap."""
        if not self.cfg.nonlinear:
            return math.inf
        z = float(np.max(np.abs(u))) ** 2
        with np.errstate(over="ignore"):
            vmax = math.exp(FOUR_PI * z) * (1.0 + 2.0 * FOUR_PI * z)
        return self.cfg.contraction / vmax

    # -- discrete functionals (consistent with the scheme's invariants)
    def grad_sq(self, u) -> float:
        return float(np.real(np.vdot(u, self.w * (self.A @ u))))

    def state(self, t, u) -> EvolutionState:
        g = self.grad_sq(u)
        z = np.abs(u) ** 2
        mass = float(self.w @ z)
        intG = float(self.w @ G_fun(z, self.p)) if self.cfg.nonlinear else 0.0
        energy = 0.5 * g - 0.5 * intG
        # I = 2E - ∫(|u|f - 4F) = ‖∇u‖² + ∫G - ∫ z g(z)
        if self.cfg.nonlinear:
            zg = float(self.w @ (z * (np.exp(FOUR_PI * z) - 1.0 - FOUR_PI * self.p.mu * z)))
            vi = g + intG - zg
        else:
            vi = g
        vm = float(self.w @ (self.grid.nodes ** 2 * z))
        return EvolutionState(t, RadialField(self.grid, u.copy()), mass, energy,
                              g, vm, vi)


def evolve(u0, p: ModelParams, cfg: DynamicsConfig = DynamicsConfig(),
           check_threshold: bool = True) -> TrajectoryReport:
    """Integrate from u0 (a RadialField) and sample every cfg.sample_every."""
    if not isinstance(u0, RadialField):
        raise TypeError("u0 must be a RadialField")
    cfg = cfg.resolved(p.omega)
    if not cfg.dt > 0 or not cfg.t_end > 0 or not cfg.sample_every > 0:
        raise ValueError("dt, t_end and sample_every must be positive")
    st = _Stepper(u0.grid, p, cfg)
    u = np.asarray(u0.values, dtype=complex)
    s0 = st.state(0.0, u)
    if check_threshold and cfg.nonlinear and not s0.grad_norm_sq < 1.0:
        raise ThresholdError(
            f"‖∇u₀‖² = {s0.grad_norm_sq:.6f} is not below the threshold 1")
    per_sample = max(1, int(round(cfg.sample_every / cfg.dt)))
    n_samples = int(round(cfg.t_end / (per_sample * cfg.dt)))
    dt = cfg.dt
    states = [s0]
    outcome, t_blow = Outcome.COMPLETED, None
    thresh = 1.0 - cfg.delta_blowup
    steps = 0
    t = 0.0
    done = False
    for k in range(1, n_samples + 1):
        for _ in range(per_sample):
            g_prev = st.grad_sq(u)
            u, elapsed, status = _advance(st, u, dt, thresh if cfg.nonlinear else math.inf)
            steps += 1
            t += elapsed
            if status == "threshold":
                outcome, t_blow, done = Outcome.BLOWUP, t, True
            elif status == "fail":
                # divergence while the gradient rises counts as blow-up
                rising = cfg.nonlinear and st.grad_sq(u) > g_prev
                outcome = Outcome.BLOWUP if rising else Outcome.STEP_FAILURE
                t_blow = t if rising else None
                done = True
            if done:
                break
        if done:
            states.append(st.state(t, u))
            break
        t = k * per_sample * dt
        states.append(st.state(t, u))
    rep = TrajectoryReport(states, outcome, t_blow, float("nan"), p, steps)
    try:
        rep = replace(rep, virial_identity_residual=virial_check(rep))
    except SamplingError:
        pass
    return rep


def _advance(st: _Stepper, u, dt, thresh=math.inf):
    """Advance by dt in substeps dt/2^k sized by the current stiffness.

    Returns (u, elapsed, status) with status "ok", "threshold" (gradient
    crossed ``thresh`` after a substep) or "fail"; u is the last good state.
    """
    fine = 1 << st.cfg.max_refine
    left = fine
    while left > 0:
        k = max(0, math.ceil(math.log2(dt / st.max_step(u)))) if st.cfg.nonlinear else 0
        if k > st.cfg.max_refine:
            return u, dt * (fine - left) / fine, "fail"
        chunk = 1 << (st.cfg.max_refine - k)   # substep length in finest units
        if left % chunk:
            chunk = left & -left                 # realign to a power of two
        v = _substep(st, u, dt * chunk / fine, st.cfg.max_halvings)
        if v is None:
            return u, dt * (fine - left) / fine, "fail"
        u = v
        left -= chunk
        if st.cfg.nonlinear and st.grad_sq(u) >= thresh:
            return u, dt * (fine - left) / fine, "threshold"
    return u, dt, "ok"


def _substep(st: _Stepper, u, dt, halvings):
    v = st.step(u, dt)
    if v is not None or halvings == 0:
        return v
    w = _substep(st, u, 0.5 * dt, halvings - 1)
    if w is None:
        return None
    return _substep(st, w, 0.5 * dt, halvings - 1)


def virial_check(report: TrajectoryReport, terminal_fraction: float = 0.1) -> float:
    """Max relative mismatch of d²/dt²‖xu‖² (central difference) and 8I.

    Only uniformly spaced interior samples are used; after a detected
    blow-up the final ``terminal_fraction`` of the time window is dropped.
    The scale is max|8I| over the samples, floored at 1e-3·8·max‖∇u‖² so a
    stationary trajectory (I ≈ 0) does not divide by roundoff.
    """
    st = report.states
    if len(st) < 5:
        raise SamplingError(f"virial check needs ≥ 5 samples, got {len(st)}")
    t = np.array([s.t for s in st])
    vm = np.array([s.virial_moment for s in st])
    vi = np.array([s.virial_i for s in st])
    gr = np.array([s.grad_norm_sq for s in st])
    h = t[1] - t[0]
    uniform = np.abs(np.diff(t) - h) <= 1e-9 * max(h, 1.0)
    idx = []
    t_stop = t[-1]
    if report.outcome is not Outcome.COMPLETED:
        t_stop = t[-1] - terminal_fraction * (t[-1] - t[0])
    for k in range(1, len(t) - 1):
        if uniform[k - 1] and uniform[k] and t[k + 1] <= t_stop:
            idx.append(k)
    if len(idx) < 3:
        raise SamplingError("too few uniformly spaced samples before the terminal phase")
    idx = np.array(idx)
    d2 = (vm[idx + 1] - 2 * vm[idx] + vm[idx - 1]) / h ** 2
    scale = max(np.max(np.abs(8 * vi[idx])), 8e-3 * np.max(gr[idx]))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(d2 - 8 * vi[idx])) / scale)


# ------------------------------------------------------------- experiments

@dataclass(frozen=True)
class BlowupRow:
    lam: float
    energy: float
    virial_i: float
    action: float
    grad_norm_sq: float
    energy_positive: bool
    virial_negative: bool
    action_below: bool
    below_threshold: bool
    kset: str
    conditions_ok: bool
    outcome: str
    blowup_time_estimate: Optional[float]

    def to_json_obj(self) -> dict:
        d = dict(self.__dict__)
        d["lambda"] = d.pop("lam")
        return d


def scaled_datum(sol, lam: float) -> RadialField:
    """Φ_λ(r) = λ φ(λ r)."""
    from .profile import rescale
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return rescale(sol, lam)


def blowup_row(sol, lam: float, cfg: DynamicsConfig = DynamicsConfig(),
               run: bool = True) -> BlowupRow:
    p = sol.params
    fld = scaled_datum(sol, lam)
    s_ref = sol.action
    fr = functionals(fld, p, s_ref=s_ref)
    conds = dict(energy_positive=fr.energy > 0, virial_negative=fr.virial_i < 0,
                 action_below=fr.action < s_ref,
                 below_threshold=fr.grad_norm_sq < 1.0)
    outcome, tb = "NotRun", None
    if run and conds["below_threshold"]:
        rep = evolve(RadialField(fld.grid, fld.values.astype(complex)), p, cfg)
        outcome, tb = rep.outcome.value, rep.blowup_time_estimate
    return BlowupRow(lam=float(lam), energy=fr.energy, virial_i=fr.virial_i,
                     action=fr.action, grad_norm_sq=fr.grad_norm_sq,
                     kset=fr.kset.value, conditions_ok=all(conds.values()),
                     outcome=outcome, blowup_time_estimate=tb, **conds)


def blowup_experiment(sol, lambdas, cfg: DynamicsConfig = DynamicsConfig(),
                      workers: int = 1) -> list:
    """One row per λ: scaling-lemma conditions, K-set and evolution outcome.

    λ must exceed 0 and satisfy λ²‖∇φ‖² < 1.  Rows violating the
    conditions are flagged (conditions_ok False) and still evolved.
    """
    lambdas = [float(x) for x in lambdas]
    for lam in lambdas:
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        if not lam * lam * sol.grad_norm_sq < 1.0:
            raise ThresholdError(f"λ={lam}: λ²‖∇φ‖² ≥ 1")
    if workers > 1 and len(lambdas) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(blowup_row, [sol] * len(lambdas), lambdas,
                               [cfg] * len(lambdas)))
    return [blowup_row(sol, lam, cfg) for lam in lambdas]
