"""Radial mesh, quadrature and discrete radial operators.

Nodes sit at half-offset positions r_j = (j + 1/2) h, h = r_max / n, so 1/r
is never evaluated at the origin.  Two discretizations of

    -Δ_l u = -u'' - u'/r + l² u / r²

are provided.

``order=2``
    Finite-volume stencil with fluxes at r_{j±1/2}.  Tridiagonal and exactly
    self-adjoint in the midpoint inner product Σ 2π r_j h u_j v_j.  Kept as a
    reference discretization.

``order=4`` (default)
    Five-point collocation stencil.  In the interior the stencil is exactly
    symmetric in the midpoint weights (the 1/r first-derivative term and
    the r-weight cancel pairwise), so the operator can be written as
    A = W⁻¹ S with S symmetric.  The first three rows are replaced by a
    closure found once, in units h = 1, that keeps S symmetric and makes A
    exact on r^l and r^{l+2}.  The Dirichlet condition at the far end is
    imposed by zero ghost values.

W holds the quadrature weights returned by :attr:`RadialGrid.weights`: the
midpoint rule with endpoint corrections at two origin nodes and three
far-end nodes, fourth-order accurate for smooth radial integrands.  Every
order-4 operator is self-adjoint in this one inner product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from . import io

TWO_PI = 2.0 * math.pi
_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_CLOSURE_ROWS = 3


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.r_max) and self.r_max > 0):
            raise ValueError(f"r_max must be positive, got {self.r_max!r}")
        if int(self.n) != self.n or self.n < 16:
            raise ValueError(f"n must be an integer >= 16, got {self.n!r}")

    @property
    def h(self) -> float:
        return self.r_max / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        r = (np.arange(self.n) + 0.5) * self.h
        r.flags.writeable = False
        return r

    @cached_property
    def midpoint_weights(self) -> np.ndarray:
        w = TWO_PI * self.nodes * self.h
        w.flags.writeable = False
        return w

    @cached_property
    def weights(self) -> np.ndarray:
        w = _unit_weights(self.n) * self.h ** 2
        w.flags.writeable = False
        return w


def _unit_weights(n: int) -> np.ndarray:
    """Corrected midpoint weights for h = 1.

    The midpoint error on [0, R] is (h²/24)(G'(R) - G'(0)) for G = 2πr q.
    At the origin G'(0) = 2π q(0) with q(0) ≈ (9q₀ - q₁)/8 for even q; at the
    far end G'(R) uses a second-order backward difference.  The corrections
    cancel for q ≡ 1, so the weights sum to π R² exactly.
    """
    r = np.arange(n) + 0.5
    w = TWO_PI * r
    w[0] -= TWO_PI * 9.0 / 192.0
    w[1] += TWO_PI / 192.0
    w[-1] += TWO_PI * r[-1] * 2.0 / 24.0
    w[-2] -= TWO_PI * r[-2] * 3.0 / 24.0
    w[-3] += TWO_PI * r[-3] / 24.0
    return w


def make_grid(r_max: float, n: int) -> RadialGrid:
    return RadialGrid(float(r_max), int(n))


@dataclass(frozen=True, eq=False)
class RadialField:
    """Values of a radial function on the nodes of ``grid``."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.n,):
            raise ValueError(
                f"values have shape {v.shape}, grid expects ({self.grid.n},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def to_json_obj(self) -> dict:
        v = self.values
        if np.iscomplexobj(v):
            vals = [[float(a), float(b)] for a, b in zip(v.real, v.imag)]
        else:
            vals = [float(a) for a in v]
        return {"r_max": self.grid.r_max, "n": self.grid.n, "values": vals}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RadialField":
        grid = make_grid(obj["r_max"], obj["n"])
        vals = obj["values"]
        if vals and isinstance(vals[0], list):
            arr = np.array([complex(a, b) for a, b in vals])
        else:
            arr = np.array(vals, dtype=float)
        return cls(grid, arr)

    def to_csv(self, path) -> None:
        v = self.values.astype(complex)
        io.write_csv(path, ["r", "value_re", "value_im"],
                     zip(self.r, v.real, v.imag))

    @classmethod
    def from_csv(cls, path, r_max: float) -> "RadialField":
        _, data = io.read_csv(path)
        grid = make_grid(r_max, data.shape[0])
        if not np.allclose(data[:, 0], grid.nodes, rtol=1e-12, atol=0):
            raise ValueError("CSV nodes do not match the half-offset grid")
        vals = data[:, 1] + 1j * data[:, 2]
        if not np.any(data[:, 2]):
            vals = data[:, 1].copy()
        return cls(grid, vals)


def _values(field) -> np.ndarray:
    return field.values if isinstance(field, RadialField) else np.asarray(field)


def integrate(values, grid: RadialGrid) -> float:
    """∫ v 2πr dr ≈ Σ w_j v_j."""
    v = _values(values)
    if v.shape != (grid.n,):
        raise ValueError(
            f"values have shape {v.shape}, grid expects ({grid.n},)")
    return float(np.real(grid.weights @ v)) if not np.iscomplexobj(v) \
        else complex(grid.weights @ v)


def inner(u, v, grid: RadialGrid) -> float:
    """Real part of ∫ u conj(v) in the quadrature inner product."""
    u, v = _values(u), _values(v)
    return float(np.real(grid.weights @ (u * np.conj(v))))


def norm(u, grid: RadialGrid) -> float:
    return math.sqrt(max(inner(u, u, grid), 0.0))


# ---------------------------------------------------------------- operators

def _interior_coeffs(r: np.ndarray, l: int) -> np.ndarray:
    """Stencil coefficients c_o(r), o = -2..2, for h = 1; shape (5, len(r))."""
    c = -(_D2[:, None] + _D1[:, None] / r[None, :])
    c[2] += l * l / r ** 2
    return c


@lru_cache(maxsize=None)
def _origin_closure(l: int) -> tuple:
    """Symmetric entries s_ik (i ≤ k < 3) of S near the origin, for h = 1.

    Unknowns are the six entries of the symmetric 3x3 corner.  Entries
    coupling to rows 3, 4 are fixed by those interior rows.  Rows of W⁻¹S
    are made exact on r^l.  Exactness on r^{l+2} holds for l = 0 and is
    met in least squares for l ≥ 1, where it conflicts with symmetry.
    """
    m = _CLOSURE_ROWS
    r = np.arange(m + 3) + 0.5
    w_mid = TWO_PI * r
    w = w_mid.copy()
    w[0] -= TWO_PI * 9.0 / 192.0
    w[1] += TWO_PI / 192.0
    c = _interior_coeffs(r, l)
    par = (-1) ** l

    # folded collocation entries, used as the prior
    fold = np.zeros((m, m + 2))
    for i in range(m):
        for o in range(-2, 3):
            k, s = i + o, 1.0
            if k < 0:
                k, s = -k - 1, par
            fold[i, k] += s * c[o + 2, i]

    unk = [(i, k) for i in range(m) for k in range(i, min(i + 3, m))]
    ix = {p: t for t, p in enumerate(unk)}

    def fixed(i, k):  # S_ik with k >= m comes from row k of the interior
        return w_mid[k] * c[i - k + 2, k]

    def rows_for(p):
        eqs, rhs = [], []
        for i in range(m):
            e = np.zeros(len(unk))
            b = -(p * p - l * l) * r[i] ** (p - 2) * w[i] if p >= 2 else 0.0
            for k in range(max(0, i - 2), i + 3):
                key = (min(i, k), max(i, k))
                if key in ix:
                    e[ix[key]] += r[k] ** p
                else:
                    b -= fixed(i, k) * r[k] ** p
            eqs.append(e)
            rhs.append(b)
        return np.array(eqs), np.array(rhs)

    # exact on r^l (hard constraint), then r^{l+2} in least squares inside
    # the constraint null space, then closest to the folded stencil
    E1, b1 = rows_for(l)
    E2, b2 = rows_for(l + 2)
    x0 = np.array([0.5 * (w[i] * fold[i, k] + w[k] * fold[k, i]) for i, k in unk])
    xp = x0 + np.linalg.lstsq(E1, b1 - E1 @ x0, rcond=None)[0]
    _, sv, vt = np.linalg.svd(E1)
    N = vt[int(np.sum(sv > 1e-12 * sv[0])):].T
    z = np.linalg.lstsq(E2 @ N, b2 - E2 @ xp, rcond=1e-6)[0]
    x = xp + N @ z
    return tuple((i, k, float(v)) for (i, k), v in zip(unk, x))


def _symmetric_part_order4(n: int, l: int) -> sp.csr_matrix:
    """S for h = 1 (S is invariant under mesh scaling)."""
    m = _CLOSURE_ROWS
    r = np.arange(n) + 0.5
    w_mid = TWO_PI * r
    c = _interior_coeffs(r, l)
    rows, cols, vals = [], [], []
    j = np.arange(m, n)
    for o in range(-2, 3):
        k = j + o
        ok = (k >= 0) & (k < n)
        rows.append(j[ok])
        cols.append(k[ok])
        vals.append(w_mid[j[ok]] * c[o + 2, j[ok]])
    # upper-right couplings of the closure rows mirror the interior rows
    for i in range(m):
        for k in range(m, i + 3):
            rows.append(np.array([i]))
            cols.append(np.array([k]))
            vals.append(np.array([w_mid[k] * c[i - k + 2, k]]))
    for i, k, v in _origin_closure(l):
        rows.append(np.array([i] if i == k else [i, k]))
        cols.append(np.array([k] if i == k else [k, i]))
        vals.append(np.array([v] if i == k else [v, v]))
    S = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return S


@lru_cache(maxsize=64)
def laplacian_matrix(grid: RadialGrid, l: int = 0, order: int = 4) -> sp.csr_matrix:
    """Sparse matrix of -Δ_l on ``grid``.

    ``order=4`` is self-adjoint in ``grid.weights``; ``order=2`` in
    ``grid.midpoint_weights``.
    """
    if l < 0 or int(l) != l:
        raise ValueError(f"sector index must be a non-negative integer, got {l!r}")
    n, h = grid.n, grid.h
    if order == 2:
        r = grid.nodes
        rp, rm = r + h / 2, r - h / 2
        main = (rp + rm) / (r * h * h) + l * l / r ** 2
        main[-1] += rp[-1] / (r[-1] * h * h)  # ghost u_n = -u_{n-1}
        up = -rp[:-1] / (r[:-1] * h * h)
        lo = -rm[1:] / (r[1:] * h * h)
        A = sp.diags([lo, main, up], [-1, 0, 1], format="csr")
    elif order == 4:
        S = _symmetric_part_order4(n, int(l))
        A = sp.diags(1.0 / _unit_weights(n)) @ S / (h * h)
        A = A.tocsr()
    else:
        raise ValueError(f"order must be 2 or 4, got {order!r}")
    A.sort_indices()
    return A


def operator_weights(grid: RadialGrid, order: int = 4) -> np.ndarray:
    """Weights of the inner product in which ``laplacian_matrix`` is symmetric."""
    return grid.weights if order == 4 else grid.midpoint_weights


def radial_laplacian_apply(field, l: int = 0, order: int = 4,
                           grid: RadialGrid | None = None) -> RadialField:
    """-Δ_l applied to a field (a RadialField, or values plus ``grid``)."""
    if isinstance(field, RadialField):
        grid, v = field.grid, field.values
    else:
        if grid is None:
            raise ValueError("grid required for raw value arrays")
        v = np.asarray(field)
    if v.shape != (grid.n,):
        raise ValueError(
            f"values have shape {v.shape}, grid expects ({grid.n},)")
    return RadialField(grid, laplacian_matrix(grid, l, order) @ v)


def radial_derivative(values, grid: RadialGrid, parity: int = 1) -> np.ndarray:
    """Fourth-order d/dr.

    ``parity`` is +1 for fields even in r (l even), -1 for odd fields; it
    sets the ghost values behind the origin.  The last two nodes use
    one-sided five-point formulas, so no boundary condition is assumed at
    r_max (a constant has zero derivative everywhere).
    """
    u = _values(values)
    n, h = grid.n, grid.h
    ext = np.concatenate([parity * u[1::-1], u])
    d = np.empty_like(u)
    d[: n - 2] = (ext[0:n - 2] - 8 * ext[1:n - 1] + 8 * ext[3:n + 1]
                  - ext[4:n + 2]) / (12 * h)
    j = n - 2
    d[j] = (-u[j - 3] + 6 * u[j - 2] - 18 * u[j - 1] + 10 * u[j] + 3 * u[j + 1]) / (12 * h)
    j = n - 1
    d[j] = (3 * u[j - 4] - 16 * u[j - 3] + 36 * u[j - 2] - 48 * u[j - 1]
            + 25 * u[j]) / (12 * h)
    return d


def grad_norm_sq(values, grid: RadialGrid) -> float:
    """‖∇u‖² = ∫ |∂_r u|² 2πr dr for a radial field."""
    d = radial_derivative(values, grid, parity=1)
    return float(grid.weights @ (np.abs(d) ** 2))


def interior_mask(grid: RadialGrid, fraction: float = 0.75) -> np.ndarray:
    """Nodes with r < fraction·r_max, away from the Dirichlet truncation."""
    return grid.nodes < fraction * grid.r_max


# even polynomial a + b r² + c r⁴ through the first three nodes, at r = 0
_ORIGIN_EXTRAP = np.linalg.solve(
    np.vander((np.arange(3) + 0.5) ** 2, 3, increasing=True).T,
    np.array([1.0, 0.0, 0.0]))


def value_at_origin(values) -> float:
    """Fourth-order extrapolation of an even field to r = 0."""
    u = _values(values)
    return float(_ORIGIN_EXTRAP @ u[:3])
