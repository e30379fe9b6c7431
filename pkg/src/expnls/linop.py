"""Linearized operators L± about a ground state, restricted to sector l.

    L₋,l = -Δ_l + ω - g(φ²)
    L₊,l = -Δ_l + ω - (2φ²g'(φ²) + g(φ²))

Both are assembled on the order-4 grid operator, so every SectorOperator
is self-adjoint in the quadrature inner product ⟨u, v⟩ = Σ w_j u_j v_j.
The symmetric form W^{1/2} A W^{-1/2} is what the eigen-solvers see.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import io
from .grid import RadialGrid, laplacian_matrix, operator_weights
from .model import ModelParams, lminus_potential, lplus_potential

KERNEL_GUARD_TOL = 1e-8


class Which(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class ConditioningError(RuntimeError):
    def __init__(self, msg: str, smallest: float):
        super().__init__(msg)
        self.smallest = smallest


@dataclass(frozen=True, eq=False)
class SectorOperator:
    which: Which
    l: int
    params: ModelParams
    grid: RadialGrid
    matrix: sp.csr_matrix
    potential_values: np.ndarray    # ω - V±(φ), the diagonal part
    order: int = 4

    @property
    def weights(self) -> np.ndarray:
        return operator_weights(self.grid, self.order)

    @cached_property
    def symmetric_matrix(self) -> sp.csr_matrix:
        """W^{1/2} A W^{-1/2}, symmetrized to remove roundoff."""
        s = np.sqrt(self.weights)
        B = sp.diags(s) @ self.matrix @ sp.diags(1.0 / s)
        return ((B + B.T) * 0.5).tocsr()

    @cached_property
    def _lu(self):
        return spla.splu(self.matrix.tocsc())

    def to_csv(self, path) -> None:
        io.write_csv(path, ["r", "V"], zip(self.grid.nodes, self.potential_values))


def sector_operator(grid: RadialGrid, p: ModelParams, phi, which, l: int,
                    order: int = 4) -> SectorOperator:
    which = Which(which)
    phi = np.asarray(phi, dtype=float)
    V = lplus_potential(phi, p) if which is Which.PLUS else lminus_potential(phi, p)
    pot = p.omega - V
    A = (laplacian_matrix(grid, l, order) + sp.diags(pot)).tocsr()
    return SectorOperator(which, int(l), p, grid, A, pot, order)


def assemble(sol, which, l: int = 0, order: int = 4) -> SectorOperator:
    """L±,l about the profile held by a ProfileSolution."""
    return sector_operator(sol.grid, sol.params, sol.phi, which, l, order)


def apply(op: SectorOperator, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (op.grid.n,):
        raise ValueError(f"field has shape {v.shape}, operator expects ({op.grid.n},)")
    return op.matrix @ v


def _w_inner(op, u, v) -> float:
    return float(op.weights @ (u * v))


def smallest_magnitude_eig(op: SectorOperator, iters: int = 30) -> float:
    """Estimate of the eigenvalue closest to zero by inverse iteration."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal(op.grid.n)
    x /= np.sqrt(_w_inner(op, x, x))
    lam = np.inf
    for _ in range(iters):
        y = op._lu.solve(x)
        ny = np.sqrt(_w_inner(op, y, y))
        lam_new = _w_inner(op, x, y) / ny ** 2
        x = y / ny
        if abs(lam_new - lam) < 1e-10 * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    # Rayleigh quotient of the converged vector
    return float(_w_inner(op, x, op.matrix @ x) / _w_inner(op, x, x))


def solve(op: SectorOperator, rhs, kernel_guard=None,
          cond_tol: Optional[float] = None) -> np.ndarray:
    """Solve A x = rhs.

    With ``kernel_guard`` = k the solution is sought in k^⊥ (bordered
    system), and rhs must already be orthogonal to k.  Without a guard the
    operator is checked for a near-zero eigenvalue (|λ| < cond_tol,
    default 1e-6·ω) and :class:`ConditioningError` is raised if found.
    """
    b = np.asarray(rhs, dtype=float)
    if b.shape != (op.grid.n,):
        raise ValueError(f"rhs has shape {b.shape}, operator expects ({op.grid.n},)")
    if kernel_guard is None:
        tol = 1e-6 * op.params.omega if cond_tol is None else cond_tol
        lam = smallest_magnitude_eig(op)
        if abs(lam) < tol:
            raise ConditioningError(
                f"operator is near-singular (smallest |eigenvalue| ≈ {lam:.3e})",
                lam)
        return op._lu.solve(b)
    k = np.asarray(kernel_guard, dtype=float)
    wk = op.weights * k
    nk = np.sqrt(wk @ k)
    nb = np.sqrt(op.weights @ (b * b))
    if abs(wk @ b) > KERNEL_GUARD_TOL * nk * max(nb, 1e-300):
        raise ValueError("right-hand side is not orthogonal to the kernel guard")
    # [A  k; (Wk)^T 0] [x; s] = [b; 0]
    n = op.grid.n
    M = sp.bmat([[op.matrix, sp.csr_matrix(k[:, None])],
                 [sp.csr_matrix(wk[None, :]), None]], format="csc")
    x = spla.spsolve(M, np.concatenate([b, [0.0]]))
    return x[:n]
