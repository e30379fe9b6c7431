"""Exponential nonlinearity, its derivatives, and scalar functionals.

The equation is

    i u_t + Δu + f(u) = 0,    f(u) = (exp(4π|u|²) - 1 - 4πμ|u|²) u,

in two space dimensions, with μ ∈ {0, 1}.  Writing f(u) = g(|u|²) u,

    g(z)  = exp(4πz) - 1 - 4πμz
    G(z)  = (exp(4πz) - 1 - 4πz - 8π²μz²) / (4π),   G' = g, G(0) = 0
    F(u)  = G(u²) / 2,                              F' = f

All evaluations use truncated-exponential remainders so that the small
amplitude tail of a soliton keeps full relative precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

FOUR_PI = 4.0 * math.pi
U_MAX = 6.0


class SaturationError(ValueError):
    """Raised when an amplitude exceeds the cap ``U_MAX``."""


@dataclass(frozen=True)
class ModelParams:
    """Frequency ω > 0 and nonlinearity flag μ ∈ {0, 1}."""

    omega: float
    mu: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive, got {self.omega!r}")
        if self.mu not in (0, 1):
            raise ValueError(f"mu must be 0 or 1, got {self.mu!r}")


def _mu(p) -> int:
    return p.mu if isinstance(p, ModelParams) else int(p)


def _check_cap(u, u_max: float = U_MAX) -> None:
    a = np.abs(np.asarray(u))
    if a.size and np.nanmax(a) > u_max:
        raise SaturationError(
            f"amplitude {float(np.nanmax(a)):.6g} exceeds cap {u_max}")


def exp_remainder(x, k: int):
    """Return exp(x) - sum_{j<k} x^j / j! without cancellation.

    A Taylor series is used for |x| < 1, the direct formula elsewhere.
    """
    x0 = np.asarray(x, dtype=float)
    x = np.atleast_1d(x0)
    small = np.abs(x) < 1.0
    out = np.empty_like(x)
    xs = x[small]
    # series: x^k/k! * (1 + x/(k+1) + x^2/((k+1)(k+2)) + ...)
    term = np.ones_like(xs)
    acc = np.ones_like(xs)
    for j in range(1, 30):
        term = term * xs / (k + j)
        acc = acc + term
    out[small] = xs ** k / math.factorial(k) * acc
    xl = x[~small]
    direct = np.exp(xl)
    for j in range(k):
        direct = direct - xl ** j / math.factorial(j)
    out[~small] = direct
    return out.reshape(x0.shape) if x0.ndim else float(out[0])


def g_fun(z, p):
    """g(z) = exp(4πz) - 1 - 4πμz for z = |u|² ≥ 0."""
    mu = _mu(p)
    _check_cap(np.sqrt(np.abs(z)))
    x = FOUR_PI * np.asarray(z, dtype=float)
    if mu == 1:
        return exp_remainder(x, 2)
    return exp_remainder(x, 1)


def g_prime(z, p):
    """g'(z) = 4π exp(4πz) - 4πμ."""
    mu = _mu(p)
    _check_cap(np.sqrt(np.abs(z)))
    x = FOUR_PI * np.asarray(z, dtype=float)
    if mu == 1:
        return FOUR_PI * exp_remainder(x, 1)
    return FOUR_PI * np.exp(x)


def G_fun(z, p):
    """Primitive of g vanishing at zero."""
    mu = _mu(p)
    _check_cap(np.sqrt(np.abs(z)))
    x = FOUR_PI * np.asarray(z, dtype=float)
    return exp_remainder(x, 3 if mu == 1 else 2) / FOUR_PI


def f_mu(u, p):
    """Nonlinearity f(u) = g(|u|²) u; accepts real or complex u."""
    u = np.asarray(u)
    return g_fun(np.abs(u) ** 2, p) * u


def F_mu(u, p):
    """Potential F with F' = f and F(0) = 0 (depends on |u| only)."""
    return 0.5 * G_fun(np.abs(np.asarray(u)) ** 2, p)


def lplus_potential(u, p):
    """V₊(u) = 2u²g'(u²) + g(u²) = exp(4πu²)(8πu² + 1) - 1 - 12πμu²."""
    z = np.abs(np.asarray(u, dtype=float)) ** 2
    # 2z g'(z) + g(z) written through remainders to keep the small-z tail
    return 2.0 * z * g_prime(z, p) + g_fun(z, p)


def lminus_potential(u, p):
    """V₋(u) = g(u²)."""
    return g_fun(np.abs(np.asarray(u, dtype=float)) ** 2, p)


def chi_187(x):
    """χ(x) = 8πx² + 1/π - 4x - exp(-4πx)/π, non-negative for x ≥ 0.

    The quadratic terms cancel exactly, leaving χ(x) = -rem₃(-4πx)/π where
    rem₃ is the exponential minus its quadratic Taylor polynomial.
    """
    return -exp_remainder(-FOUR_PI * np.asarray(x, dtype=float), 3) / math.pi


def witness_integrand(phi):
    """exp(4πφ²)(8πφ⁴ + 1/π - 4φ²) - 1/π = exp(4πφ²) χ(φ²)."""
    z = np.asarray(phi, dtype=float) ** 2
    _check_cap(np.sqrt(z))
    return np.exp(FOUR_PI * z) * chi_187(z)


class KSet(str, enum.Enum):
    KMINUS = "KMinus"
    KPLUS = "KPlus"
    NEITHER = "Neither"
    UNDEFINED = "Undefined"


@dataclass(frozen=True)
class FunctionalReport:
    mass: float
    energy: float
    action: float
    p_constraint: float
    virial_i: float
    grad_norm_sq: float
    kset: KSet


def classify(action: float, virial_i: float, s_ref: Optional[float]) -> KSet:
    if s_ref is None:
        return KSet.UNDEFINED
    if action < s_ref and virial_i < 0:
        return KSet.KMINUS
    if action < s_ref and virial_i > 0:
        return KSet.KPLUS
    return KSet.NEITHER


def functionals(field, p: ModelParams, s_ref: Optional[float] = None,
                grid=None) -> FunctionalReport:
    """Mass, energy, action, P and I functionals of a radial field.

    ``field`` is a :class:`expnls.grid.RadialField` or a value array (then
    ``grid`` is required).  Complex fields enter through |u|.
    """
    from .grid import RadialField, grad_norm_sq, integrate

    if isinstance(field, RadialField):
        grid, values = field.grid, field.values
    else:
        if grid is None:
            raise ValueError("grid required for raw value arrays")
        values = np.asarray(field)
    if values.shape != (grid.n,):
        raise ValueError(
            f"field has shape {values.shape}, grid expects ({grid.n},)")
    amp = np.abs(values)
    mass = integrate(amp ** 2, grid)
    grad = grad_norm_sq(values, grid)
    intF = integrate(F_mu(amp, p), grid)
    intfu = integrate(f_mu(amp, p) * amp, grid)
    energy = 0.5 * grad - intF
    action = energy + 0.5 * p.omega * mass
    p_constraint = 0.5 * p.omega * mass - intF
    virial_i = 2.0 * energy - (intfu - 4.0 * intF)
    return FunctionalReport(mass=mass, energy=energy, action=action,
                            p_constraint=p_constraint, virial_i=virial_i,
                            grad_norm_sq=grad,
                            kset=classify(action, virial_i, s_ref))
