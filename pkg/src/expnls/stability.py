"""The real growing mode of the linearized flow about e^{iωt}φ.

Writing u = e^{iωt}(φ + a + ib) and linearizing gives a_t = L₋b,
b_t = -L₊a.  A mode e^{λt}(v₁, v₂) satisfies

    L₋v₂ = λv₁,   L₊v₁ = -λv₂   ⇒   -L₋L₊ v₁ = λ² v₁.

On the radial sector the composed operator has one positive eigenvalue.
It is located in two passes: a dense eigensolve on a coarse grid gives the
shift and the count of positive eigenvalues, then shift-invert Arnoldi on
the working grid gives the mode.  Sectors l ≥ 1 cannot grow when L₋,l > 0
and L₊,l ≥ 0 (the composed operator is then similar to a non-positive one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .grid import RadialField, make_grid
from .linop import SectorOperator, Which, assemble, solve
from .spectral import KERNEL_TOL, lowest_eigs

DENSE_MAX = 1024
COARSE_N = 1024


class StabilityDetectedError(RuntimeError):
    """No positive λ² found."""


class MultiplicityError(RuntimeError):
    pass


class HorizonError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class GrowingMode:
    lam: float
    v1: np.ndarray          # real part of the perturbation, acted on by L₊
    v2: np.ndarray          # imaginary part
    residual: float
    sector: int = 0
    lambda_sq: float = float("nan")
    second_eig: float = float("nan")
    sector_minima: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {"lambda": self.lam, "residual": self.residual,
                "sector": self.sector, "lambda_sq": self.lambda_sq,
                "second_eig": self.second_eig,
                "sector_minima": {str(k): v for k, v in self.sector_minima.items()}}


def first_order_residual(op_plus: SectorOperator, op_minus: SectorOperator,
                         lam: float, v1, v2) -> float:
    """max(‖L₋v₂ - λv₁‖, ‖L₊v₁ + λv₂‖)/(‖v₁‖ + ‖v₂‖), quadrature norms."""
    w = op_plus.weights

    def nrm(x):
        return math.sqrt(float(w @ (x * x)))
    r1 = op_minus.matrix @ v2 - lam * v1
    r2 = op_plus.matrix @ v1 + lam * v2
    return max(nrm(r1), nrm(r2)) / (nrm(v1) + nrm(v2))


def composed_positive(op_plus: SectorOperator, op_minus: SectorOperator,
                      floor: float) -> np.ndarray:
    """Dense spectrum of -L₋L₊: the (nearly) real eigenvalues above floor."""
    M = -(op_minus.matrix @ op_plus.matrix).toarray()
    ev = sla.eigvals(M)
    real = np.abs(ev.imag) <= 1e-8 * np.maximum(np.abs(ev), 1.0)
    pos = np.sort(ev.real[real & (ev.real > floor)])[::-1]
    return pos


def _mode_from_vector(op_plus, op_minus, lam_sq, v) -> tuple:
    w = op_plus.weights
    v1 = np.real(v)
    if np.linalg.norm(v1) < np.linalg.norm(np.imag(v)):
        v1 = np.imag(v)
    v1 = v1 / math.sqrt(float(w @ (v1 * v1)))
    if v1[np.argmax(np.abs(v1))] < 0:
        v1 = -v1
    lam = math.sqrt(lam_sq)
    v2 = -(op_plus.matrix @ v1) / lam
    return lam, v1, v2


def _polish(op_plus, op_minus, v1, kernel):
    w = op_plus.weights
    if kernel is not None:
        k = np.asarray(kernel, dtype=float)
        v1 = v1 - (w @ (v1 * k)) / (w @ (k * k)) * k
        lw = solve(op_minus, v1, kernel_guard=k)
    else:
        lw = solve(op_minus, v1)
    lp = op_plus.matrix @ v1
    lam_sq = -float(w @ (lp * v1)) / float(w @ (lw * v1))
    lam = math.sqrt(lam_sq)
    v2 = lam * lw
    if kernel is not None:
        v2 += (w @ ((-lp / lam - v2) * k)) / (w @ (k * k)) * k
    nv = math.sqrt(float(w @ (v1 * v1)))
    return lam, v1 / nv, v2 / nv


def growing_mode_from_operators(op_plus: SectorOperator, op_minus: SectorOperator,
                                sigma: Optional[float] = None,
                                floor: Optional[float] = None,
                                kernel=None) -> GrowingMode:
    """Growing mode for a given pair of sector operators.

    Dense for n ≤ 1024; otherwise shift-invert around ``sigma`` (a λ²
    estimate, normally from a coarse grid).  ``kernel`` is the kernel of
    L₋ (φ for a ground state), used to guard the L₋ solve.
    """
    om = op_plus.params.omega
    if floor is None:
        floor = 1e-3 * om * om
    n = op_plus.grid.n
    M = -(op_minus.matrix @ op_plus.matrix)
    if n <= DENSE_MAX or sigma is None:
        if n > 4 * DENSE_MAX:
            raise ValueError("a shift estimate is required on large grids")
        ev, vecs = sla.eig(M.toarray())
        real = np.abs(ev.imag) <= 1e-8 * np.maximum(np.abs(ev), 1.0)
        cand = np.where(real & (ev.real > floor))[0]
        if cand.size == 0:
            raise StabilityDetectedError("no positive eigenvalue of -L₋L₊")
        if cand.size > 1:
            raise MultiplicityError(
                f"{cand.size} positive eigenvalues of -L₋L₊: {np.sort(ev.real[cand])}")
        i = cand[0]
        lam_sq = float(ev.real[i])
        rest = np.delete(ev.real[real], np.where(np.where(real)[0] == i)[0])
        second = float(np.max(rest)) if rest.size else -np.inf
        v = vecs[:, i]
    else:
        ev, vecs = spla.eigs(M.tocsc(), k=3, sigma=sigma * (1 + 1e-7),
                             which="LM", tol=1e-14, maxiter=10000)
        order = np.argsort(-ev.real)
        ev, vecs = ev[order], vecs[:, order]
        lam_sq = float(ev.real[0])
        if lam_sq <= floor:
            raise StabilityDetectedError("no positive eigenvalue of -L₋L₊")
        second = float(ev.real[1])
        if second > KERNEL_TOL * lam_sq:
            raise MultiplicityError(
                f"second eigenvalue {second:.4g} of -L₋L₊ is positive")
        v = vecs[:, 0]
    lam, v1, v2 = _mode_from_vector(op_plus, op_minus, lam_sq, v)
    res = first_order_residual(op_plus, op_minus, lam, v1, v2)
    # v₂ = -L₊v₁/λ carries eps·‖L₊‖ noise that L₋ then amplifies; rebuild
    # it from a guarded L₋ solve and take λ² from symmetric forms
    lam_p, v1p, v2p = _polish(op_plus, op_minus, v1, kernel)
    res_p = first_order_residual(op_plus, op_minus, lam_p, v1p, v2p)
    if res_p < res:
        lam, v1, v2, res = lam_p, v1p, v2p, res_p
    return GrowingMode(lam=lam, v1=v1, v2=v2, residual=res, sector=op_plus.l,
                       lambda_sq=lam_sq, second_eig=second)


def sector_definiteness(sol, l_range=(1, 2, 3), order: int = 4) -> dict:
    """Lowest eigenvalues of L₋,l and L₊,l for the sectors in l_range."""
    out = {}
    for l in l_range:
        m = lowest_eigs(assemble(sol, Which.MINUS, l, order), 1)[0].value
        pl = lowest_eigs(assemble(sol, Which.PLUS, l, order), 1)[0].value
        out[l] = {"minus": m, "plus": pl}
    return out


def growing_mode(sol, coarse_n: int = COARSE_N, order: int = 4,
                 l_check=(1, 2, 3)) -> GrowingMode:
    """Growing mode about the ground state held by ``sol``.

    Raises MultiplicityError if the coarse spectrum has more than one
    positive λ², or if a sector l ≥ 1 admits growth.
    """
    from .profile import SolverConfig, shoot_profile

    op_p = assemble(sol, Which.PLUS, 0, order)
    op_m = assemble(sol, Which.MINUS, 0, order)
    om = sol.params.omega
    floor = 1e-3 * om * om
    if sol.grid.n <= DENSE_MAX:
        mode = growing_mode_from_operators(op_p, op_m, floor=floor, kernel=sol.phi)
    else:
        cgrid = make_grid(sol.grid.r_max, coarse_n)
        csol = shoot_profile(sol.params, cgrid, SolverConfig(min_width=0.0, order=order))
        cp = assemble(csol, Which.PLUS, 0, order)
        cm = assemble(csol, Which.MINUS, 0, order)
        pos = composed_positive(cp, cm, floor)
        if pos.size == 0:
            raise StabilityDetectedError("no positive eigenvalue of -L₋L₊ on the coarse grid")
        if pos.size > 1:
            raise MultiplicityError(f"coarse grid shows {pos.size} positive λ²: {pos}")
        mode = growing_mode_from_operators(op_p, op_m, sigma=float(pos[0]), floor=floor,
                                           kernel=sol.phi)
    minima = sector_definiteness(sol, l_check, order) if l_check else {}
    for l, d in minima.items():
        if d["minus"] <= 0 or d["plus"] < -KERNEL_TOL * om:
            raise MultiplicityError(
                f"sector l={l} is indefinite (L₋ {d['minus']:.3g}, L₊ {d['plus']:.3g})")
    return GrowingMode(lam=mode.lam, v1=mode.v1, v2=mode.v2, residual=mode.residual,
                       sector=0, lambda_sq=mode.lambda_sq, second_eig=mode.second_eig,
                       sector_minima=minima)


# ------------------------------------------------------------- dynamics fit

@dataclass(frozen=True, eq=False)
class GrowthTrace:
    t: np.ndarray
    d: np.ndarray
    eps: float


def perturbation_trace(sol, direction: str = "mode", eps: Optional[float] = None,
                       horizon: Optional[float] = None, dt: Optional[float] = None,
                       mode: Optional[GrowingMode] = None) -> GrowthTrace:
    """d(t) = ‖|u(t)| - φ‖ for u₀ = φ + ε·(v₁ + i v₂) or u₀ = φ + iεφ.

    |u| is phase-free, so d is measured in the co-rotating frame.
    """
    from .dynamics import DynamicsConfig, evolve

    w = sol.grid.weights
    phi = sol.phi
    nphi = math.sqrt(float(w @ (phi * phi)))
    if eps is None:
        eps = 1e-5 * nphi
    if eps > 1e-4 * nphi:
        raise ValueError("perturbation scale must be ≤ 1e-4‖φ‖")
    if mode is None:
        mode = growing_mode(sol)
    lam = mode.lam
    if direction == "mode":
        u0 = phi + eps * (mode.v1 + 1j * mode.v2)
    elif direction == "phase":
        u0 = phi + 1j * eps * phi / nphi
    else:
        raise ValueError(f"unknown direction {direction!r}")
    if dt is None:
        dt = min(1e-3 / sol.params.omega, 0.01 / lam)
    if horizon is None:
        horizon = 8.0 / lam
    cfg = DynamicsConfig(dt=dt, t_end=horizon, sample_every=dt)
    rep = evolve(RadialField(sol.grid, u0.astype(complex)), sol.params, cfg)
    t = rep.series("t")
    d = np.array([math.sqrt(float(w @ (np.abs(s.field.values) - phi) ** 2))
                  for s in rep.states])
    return GrowthTrace(t, d, eps)


def fit_growth(trace: GrowthTrace, lo: float = 10.0, hi: float = 100.0) -> float:
    """Slope of log d over the first stretch where lo·ε < d < hi·ε."""
    d, t = trace.d, trace.t
    inside = (d > lo * trace.eps) & (d < hi * trace.eps)
    idx = np.where(inside)[0]
    if idx.size < 5:
        raise HorizonError("the fit window 10ε < d < 100ε was not reached")
    # first contiguous run
    cut = np.where(np.diff(idx) > 1)[0]
    if cut.size:
        idx = idx[:cut[0] + 1]
    if idx.size < 5:
        raise HorizonError("fit window holds fewer than 5 samples")
    return float(np.polyfit(t[idx], np.log(d[idx]), 1)[0])


def growth_rate_from_dynamics(sol, perturbation_scale: Optional[float] = None,
                              horizon: Optional[float] = None,
                              mode: Optional[GrowingMode] = None,
                              dt: Optional[float] = None) -> float:
    """Growth rate fitted from the nonlinear flow seeded along the mode."""
    tr = perturbation_trace(sol, "mode", perturbation_scale, horizon, dt, mode)
    return fit_growth(tr)


@dataclass(frozen=True)
class UnstableModeReport:
    omega: float
    mu: int
    lam: float
    residual: float
    lambda_dynamics_fit: float
    agreement_pct: float

    def to_json_obj(self) -> dict:
        return {"omega": self.omega, "mu": self.mu, "lambda": self.lam,
                "residual": self.residual,
                "lambda_dynamics_fit": self.lambda_dynamics_fit,
                "agreement_pct": self.agreement_pct}


def unstable_mode_report(sol, fit: bool = True) -> UnstableModeReport:
    mode = growing_mode(sol)
    lf = growth_rate_from_dynamics(sol, mode=mode) if fit else float("nan")
    return UnstableModeReport(sol.params.omega, sol.params.mu, mode.lam,
                              mode.residual, lf,
                              100.0 * abs(lf - mode.lam) / mode.lam)
