"""Ground-state profiles of -Δφ + ωφ = f(φ) in two dimensions.

The radial ground state is bracketed by shooting from the origin: for a
trial φ(0) = a, too large an amplitude makes the trajectory cross zero,
too small an amplitude makes it turn around and grow.  Bisection on a
isolates the decaying branch to about twelve digits.  The shooting path
is an adaptive ODE integration, independent of the spatial grid.  Past the
point where the two bracketing trajectories separate, the K₀ asymptotics
continue the tail.  Newton's method on the discrete boundary-value problem
then polishes this guess to a solution of the discrete equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import k0e

from . import io
from .grid import (RadialField, RadialGrid, grad_norm_sq, integrate,
                   laplacian_matrix, make_grid, value_at_origin)
from .model import (FOUR_PI, ModelParams, F_mu, U_MAX, f_mu, functionals,
                    lplus_potential)


class ProfileError(RuntimeError):
    """Base class for profile construction failures."""


class BracketError(ProfileError):
    pass


class GroundStateSelectionError(ProfileError):
    pass


class NewtonError(ProfileError):
    pass


class WindowError(ProfileError):
    pass


class ThresholdWarning(UserWarning):
    """Rescaled data at or above the gradient threshold ‖∇u‖² = 1."""


@dataclass(frozen=True)
class SolverConfig:
    a_lo: float = 1e-3
    a_hi: float = 1.5
    tol: float = 1e-12          # Newton residual, relative to |A||φ|
    max_iter: int = 200
    bisect_rtol: float = 1e-12
    ivp_rtol: float = 1e-10
    order: int = 4
    min_width: float = 8.0      # required r_max·√ω
    nonlinearity_scale: float = 1.0


@dataclass(frozen=True, eq=False)
class ProfileSolution:
    params: ModelParams
    field: RadialField
    amplitude: float
    grad_norm_sq: float
    mass: float
    pohozaev_42_residual: float
    pohozaev_45_residual: float
    decay_rate_fit: float
    action: float
    residual: float = 0.0
    iterations: int = 0
    order: int = 4

    @property
    def grid(self) -> RadialGrid:
        return self.field.grid

    @property
    def phi(self) -> np.ndarray:
        return self.field.values

    def to_json_obj(self) -> dict:
        return {
            "omega": self.params.omega,
            "mu": self.params.mu,
            "amplitude": self.amplitude,
            "grad_norm_sq": self.grad_norm_sq,
            "mass": self.mass,
            "action": self.action,
            "pohozaev": [self.pohozaev_42_residual, self.pohozaev_45_residual],
            "decay_rate": self.decay_rate_fit,
            "residual": self.residual,
            "grid": {"r_max": self.grid.r_max, "n": self.grid.n},
            "values": [float(v) for v in self.phi],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ProfileSolution":
        grid = make_grid(obj["grid"]["r_max"], obj["grid"]["n"])
        r42, r45 = obj["pohozaev"]
        return cls(params=ModelParams(obj["omega"], int(obj["mu"])),
                   field=RadialField(grid, np.array(obj["values"], dtype=float)),
                   amplitude=obj["amplitude"], grad_norm_sq=obj["grad_norm_sq"],
                   mass=obj["mass"], pohozaev_42_residual=r42,
                   pohozaev_45_residual=r45, decay_rate_fit=obj["decay_rate"],
                   action=obj["action"], residual=obj.get("residual", 0.0))

    def save(self, json_path, csv_path=None) -> None:
        io.write_json(json_path, self.to_json_obj())
        if csv_path is not None:
            io.write_csv(csv_path, ["r", "phi"], zip(self.grid.nodes, self.phi))

    @classmethod
    def load(cls, path) -> "ProfileSolution":
        return cls.from_json_obj(io.read_json(path))


# ---------------------------------------------------------------- shooting

def _shoot(a: float, omega: float, mu: int, scale: float, r_end: float,
           rtol: float):
    """Integrate the radial ODE from φ(0) = a.

    Returns (+1 crossing | -1 rebound | 0 neither, solution object).
    """
    r0 = 1e-4 / math.sqrt(omega)
    z = a * a
    c = omega * a - scale * (math.expm1(FOUR_PI * z) - FOUR_PI * mu * z) * a
    y0 = [a + c * r0 * r0 / 4.0, c * r0 / 2.0]
    if c >= 0:
        return -1, None  # rises from the origin: amplitude too small

    def rhs(r, y):
        p = float(y[0])
        z = min(p * p, U_MAX * U_MAX)
        g = math.expm1(FOUR_PI * z) - FOUR_PI * mu * z
        return [y[1], -y[1] / r + (omega - scale * g) * p]

    def crossing(r, y):
        return y[0]
    crossing.terminal, crossing.direction = True, -1

    def rebound(r, y):
        return y[1]
    rebound.terminal, rebound.direction = True, 1

    # rejected trajectories may overflow before the event fires
    with np.errstate(all="ignore"):
        sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=rtol,
                        atol=1e-13 * a, events=(crossing, rebound),
                        dense_output=True)
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    if sol.status < 0 and sol.y[1, -1] < 0:
        return 1, sol  # integrator gave up while plunging
    return 0, sol


def bracket_amplitude(p: ModelParams, r_end: float,
                      cfg: SolverConfig = SolverConfig()):
    """Bisect φ(0) between rebounding and sign-crossing trajectories.

    Returns (a_lo, a_hi, sol_lo, sol_hi).
    """
    mu, om, s = p.mu, p.omega, cfg.nonlinearity_scale
    r_end = max(r_end, 40.0 / math.sqrt(om))
    lo, hi = cfg.a_lo, cfg.a_hi
    c_lo, sol_lo = _shoot(lo, om, mu, s, r_end, cfg.ivp_rtol)
    c_hi, sol_hi = _shoot(hi, om, mu, s, r_end, cfg.ivp_rtol)
    if c_lo >= 0 or c_hi <= 0:
        raise BracketError(
            f"amplitude bracket [{lo}, {hi}] does not straddle the ground state "
            f"(classes {c_lo}, {c_hi})")
    while hi - lo > cfg.bisect_rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        c, sol = _shoot(mid, om, mu, s, r_end, cfg.ivp_rtol)
        if c > 0:
            hi, sol_hi = mid, sol
        elif c < 0:
            lo, sol_lo = mid, sol
        else:
            lo, sol_lo = mid, sol
            break
    return lo, hi, sol_lo, sol_hi


def initial_guess(p: ModelParams, grid: RadialGrid,
                  cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Shooting profile on the grid, continued by the K₀ tail."""
    lo, hi, sol_lo, sol_hi = bracket_amplitude(p, grid.r_max, cfg)
    if sol_lo is None or sol_hi is None:
        raise BracketError("bisection did not produce both bracketing trajectories")
    r = grid.nodes
    k = math.sqrt(p.omega)
    # trust the trajectories where they still agree
    r_stop = min(sol_lo.t[-1], sol_hi.t[-1])
    rr = r[(r > sol_lo.t[0]) & (r < r_stop)]
    plo = sol_lo.sol(rr)[0]
    phi_hi = sol_hi.sol(rr)[0]
    agree = np.abs(plo - phi_hi) < 1e-3 * np.abs(plo)
    bad = np.flatnonzero(~agree)
    j_end = bad[0] if bad.size else rr.size
    j_end = max(int(0.8 * j_end), 3)
    r_c = rr[j_end - 1]
    phi = np.empty(grid.n)
    head = r <= r_c
    inside = r < sol_lo.t[0]
    phi[inside] = lo
    sel = head & ~inside
    phi[sel] = sol_lo.sol(r[sel])[0]
    phi_c = sol_lo.sol(r_c)[0]
    tail = ~head
    phi[tail] = phi_c * k0e(k * r[tail]) / k0e(k * r_c) * np.exp(-k * (r[tail] - r_c))
    return phi


# ---------------------------------------------------------------- Newton

def _newton(A: sp.spmatrix, phi: np.ndarray, p: ModelParams,
            cfg: SolverConfig) -> tuple[np.ndarray, float, int]:
    s = cfg.nonlinearity_scale
    absA = abs(A)

    def resid(v):
        return A @ v + p.omega * v - s * f_mu(v, p)

    def rel(v, R):
        scale = np.max(absA @ np.abs(v) + p.omega * np.abs(v)
                       + s * np.abs(f_mu(v, p)))
        return np.max(np.abs(R)) / scale

    R = resid(phi)
    last_step = np.inf
    for it in range(1, cfg.max_iter + 1):
        J = (A + sp.diags(p.omega - s * lplus_potential(phi, p))).tocsc()
        d = spla.splu(J).solve(R)
        t, base = 1.0, np.max(np.abs(R))
        while True:
            trial = phi - t * d
            if np.max(np.abs(trial)) < U_MAX:
                Rt = resid(trial)
                if np.max(np.abs(Rt)) <= (1 - 1e-4 * t) * base or t < 1e-3:
                    break
            t *= 0.5
            if t < 1e-6:
                raise NewtonError("line search failed")
        phi, R = trial, Rt
        step = t * np.max(np.abs(d))
        if rel(phi, R) <= cfg.tol:
            return phi, rel(phi, R), it
        if step <= 1e-15 * np.max(np.abs(phi)) or (step >= 0.5 * last_step
                                                     and step < 1e-11):
            break  # stagnation at roundoff
        last_step = step
    r_final = rel(phi, R)
    if r_final > max(cfg.tol, 1e-10):
        raise NewtonError(f"Newton stalled with relative residual {r_final:.3e}")
    return phi, r_final, it


def shoot_profile(p: ModelParams, grid: RadialGrid,
                  cfg: SolverConfig = SolverConfig(),
                  fit_tail: bool = True) -> ProfileSolution:
    """Ground state φ_ω on ``grid`` with diagnostics."""
    if grid.r_max * math.sqrt(p.omega) < cfg.min_width:
        raise ValueError(
            f"r_max·√ω = {grid.r_max * math.sqrt(p.omega):.3g} is below "
            f"{cfg.min_width}; the grid does not hold the profile tail")
    guess = initial_guess(p, grid, cfg)
    A = laplacian_matrix(grid, 0, cfg.order)
    phi, res, it = _newton(A, guess, p, cfg)
    _check_ground_state(phi)
    return _diagnose(p, RadialField(grid, phi), cfg, res, it, fit_tail)


def _check_ground_state(phi: np.ndarray) -> None:
    if np.any(phi <= 0):
        raise GroundStateSelectionError("profile is not strictly positive")
    # monotone decrease, tested where values are above roundoff level
    sig = phi > 1e-12 * phi[0]
    dec = np.diff(phi)[sig[1:]]
    if np.any(dec >= 0):
        raise GroundStateSelectionError("profile is not radially decreasing")


def _diagnose(p: ModelParams, fld: RadialField, cfg: SolverConfig,
              res: float, it: int, fit_tail: bool) -> ProfileSolution:
    grid, phi = fld.grid, fld.values
    r42, r45 = pohozaev_residuals(phi, p, grid, cfg.nonlinearity_scale)
    rep = functionals(fld, p)
    rate = float("nan")
    if fit_tail:
        try:
            rate = fit_decay(phi, grid)
        except WindowError:
            rate = float("nan")
    return ProfileSolution(params=p, field=fld, amplitude=value_at_origin(phi),
                           grad_norm_sq=rep.grad_norm_sq, mass=rep.mass,
                           pohozaev_42_residual=r42, pohozaev_45_residual=r45,
                           decay_rate_fit=rate, action=rep.action,
                           residual=res, iterations=it, order=cfg.order)


# ---------------------------------------------------------------- checks

def residual_eq20(values, p: ModelParams, grid: RadialGrid, order: int = 4,
                  source=None) -> float:
    """‖-Δφ + ωφ - f(φ) - source‖_∞ over nodes away from the far boundary."""
    phi = np.asarray(values, dtype=float)
    R = laplacian_matrix(grid, 0, order) @ phi + p.omega * phi - f_mu(phi, p)
    if source is not None:
        R = R - source
    return float(np.max(np.abs(R[:-2]))) if R.size else 0.0


def pohozaev_residuals(phi, p: ModelParams, grid: RadialGrid,
                       scale: float = 1.0) -> tuple[float, float]:
    """Relative residuals of  (ω/2)‖φ‖² = ∫F  and  ‖∇φ‖² + ω‖φ‖² = ∫fφ."""
    phi = np.asarray(phi, dtype=float)
    mass = integrate(phi ** 2, grid)
    intF = scale * integrate(F_mu(phi, p), grid)
    intf = scale * integrate(f_mu(phi, p) * phi, grid)
    grad = grad_norm_sq(phi, grid)
    r42 = (0.5 * p.omega * mass - intF) / intF if intF else float("inf")
    r45 = (grad + p.omega * mass - intf) / intf if intf else float("inf")
    return float(r42), float(r45)


def pohozaev_check(sol: ProfileSolution) -> tuple[float, float]:
    return sol.pohozaev_42_residual, sol.pohozaev_45_residual


def fit_decay(values, grid: RadialGrid, window=(0.5, 0.9),
              floor: float = 1e-11) -> float:
    """Least-squares slope of log(φ√r) on the tail window; returns -slope.

    Nodes below ``floor``·max|φ| are dropped as roundoff-dominated.
    """
    phi = np.asarray(values, dtype=float)
    r = grid.nodes
    sel = (r >= window[0] * grid.r_max) & (r <= window[1] * grid.r_max)
    sel &= phi > floor * np.max(np.abs(phi))
    if np.count_nonzero(sel) < 8:
        raise WindowError("tail window holds fewer than 8 usable nodes")
    slope = np.polyfit(r[sel], np.log(phi[sel] * np.sqrt(r[sel])), 1)[0]
    return float(-slope)


def rescale(sol, lam: float) -> RadialField:
    """Φ_λ(r) = λ Φ(λ r) on the same grid (cubic interpolation).

    Issues :class:`ThresholdWarning` when λ²‖∇Φ‖² ≥ 1.
    """
    import warnings

    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    fld = sol.field if isinstance(sol, ProfileSolution) else sol
    grid, phi = fld.grid, fld.values
    r = grid.nodes
    # even extension across the origin for the spline
    k = 8
    rr = np.concatenate([-r[k - 1::-1], r])
    vv = np.concatenate([phi[k - 1::-1], phi])
    spline = CubicSpline(rr, vv)
    x = lam * r
    out = np.where(x <= r[-1], spline(np.minimum(x, r[-1])), 0.0) * lam
    g0 = sol.grad_norm_sq if isinstance(sol, ProfileSolution) \
        else grad_norm_sq(phi, grid)
    if lam * lam * g0 >= 1.0:
        warnings.warn(
            f"λ²‖∇Φ‖² = {lam * lam * g0:.4f} ≥ 1 violates the evolution "
            "threshold", ThresholdWarning, stacklevel=2)
    return RadialField(grid, out)
