"""Eigenvalues of L±,l, Morse indices, and the two instability witnesses.

Witness 1 (slope): ⟨L₊⁻¹φ, φ⟩ on the radial sector.  With n(L₊) = 1 a
positive value means one real unstable eigenvalue of JL.

Witness 2 (Ψ = rφ' + φ): Ψ ⊥ φ and ⟨L₊Ψ, Ψ⟩ < 0.  Using L₊φ = -2φ³g'(φ²),
L₊(rφ') = -2Δφ and the 2D scaling identities, the form reduces to

    ⟨L₊Ψ, Ψ⟩ = -∫ [exp(4πφ²)(8πφ⁴ + 1/π - 4φ²) - 1/π] dx,

whose integrand is exp(4πφ²)·χ(φ²) ≥ 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (integrate, interior_mask, laplacian_matrix, radial_derivative)
from .linop import (SectorOperator, Which, assemble, solve)
from .model import witness_integrand

KERNEL_TOL = 1e-5         # times ω
KERNEL_ALIGN = 0.999
DENSE_MAX = 2048
EIG_RESIDUAL_TOL = 1e-8


class EigenError(RuntimeError):
    pass


class InconclusiveError(RuntimeError):
    pass


class VerdictError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EigenPair:
    value: float
    vector: np.ndarray      # unit norm in the quadrature inner product
    residual: float


def lowest_eigs(op: SectorOperator, k: int = 4,
                dense: Optional[bool] = None) -> list[EigenPair]:
    """k smallest eigenpairs, ascending.

    Works on the symmetric form B = W^{1/2} A W^{-1/2}.  Uses a dense solver
    for n ≤ 2048 and shift-invert Lanczos below the spectrum otherwise
    (-Δ_l ≥ 0, so min(ω - V) bounds the spectrum from below).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = op.grid.n
    k = min(k, n - 2)
    B = op.symmetric_matrix
    if dense is None:
        dense = n <= DENSE_MAX
    if dense:
        vals, vecs = sla.eigh(B.toarray(), subset_by_index=[0, k - 1])
    else:
        lo = float(np.min(op.potential_values))
        sigma = lo - 1e-2 * (1.0 + abs(lo))
        try:
            vals, vecs = spla.eigsh(B.tocsc(), k=k, sigma=sigma, which="LM",
                                    tol=1e-13, maxiter=5000)
        except spla.ArpackNoConvergence as exc:
            raise EigenError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    s = np.sqrt(op.weights)
    out = []
    for lam, y in zip(vals, vecs.T):
        v = y / s
        v /= math.sqrt(op.weights @ (v * v))
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        r = op.matrix @ v - lam * v
        res = math.sqrt(op.weights @ (r * r))
        if res > EIG_RESIDUAL_TOL * max(1.0, abs(lam)):
            # one step of inverse iteration tightens roundoff-level pairs
            M = (op.matrix - (lam - 1e-9 * max(1.0, abs(lam))) * sp.identity(n)).tocsc()
            v = spla.splu(M).solve(v)
            v /= math.sqrt(op.weights @ (v * v))
            lam = float(v @ (op.weights * (op.matrix @ v)))
            r = op.matrix @ v - lam * v
            res = math.sqrt(op.weights @ (r * r))
            if res > EIG_RESIDUAL_TOL * max(1.0, abs(lam)):
                raise EigenError(
                    f"eigenpair residual {res:.2e} above tolerance at λ={lam:.6g}")
        out.append(EigenPair(float(lam), v, float(res)))
    return out


def alignment(u, v, weights) -> float:
    den = math.sqrt((weights @ (u * u)) * (weights @ (v * v)))
    return float(abs(weights @ (u * v)) / den) if den > 0 else 0.0


def kernel_direction(sol, which, l: int) -> Optional[np.ndarray]:
    """Analytic kernel of L±,l, when there is one: φ for L₋,0, φ' for L₊,1."""
    which = Which(which)
    if which is Which.MINUS and l == 0:
        return sol.phi
    if which is Which.PLUS and l == 1:
        return radial_derivative(sol.phi, sol.grid, parity=1)
    return None


@dataclass(frozen=True)
class SectorSummary:
    l: int
    eigenvalues: list
    negative: int
    kernel: Optional[float]
    kernel_alignment: Optional[float]


@dataclass(frozen=True)
class MorseResult:
    which: str
    index: int
    sectors: list

    def kernel_eig(self, l: int) -> Optional[float]:
        for s in self.sectors:
            if s.l == l:
                return s.kernel
        return None


def morse_index(sol, which, l_max: int = 6, k: int = 4,
                order: int = 4) -> MorseResult:
    """Negative eigenvalues of L± over sectors 0..l_max (×2 for l ≥ 1).

    An eigenvalue with |λ| < 1e-5·ω whose eigenfield aligns with the known
    kernel direction is counted as zero.  Sectors are scanned upward and
    the scan stops at the first sector whose lowest eigenvalue is positive.
    """
    which = Which(which)
    if l_max < 2:
        raise ValueError("l_max must be >= 2")
    om = sol.params.omega
    total, sectors = 0, []
    for l in range(l_max + 1):
        op = assemble(sol, which, l, order)
        kk = k
        while True:
            pairs = lowest_eigs(op, kk)
            if pairs[-1].value > 0 or kk >= op.grid.n // 2:
                break
            kk *= 2
        kdir = kernel_direction(sol, which, l)
        neg, kern, align = 0, None, None
        for pr in pairs:
            is_kernel = False
            if kdir is not None and abs(pr.value) < KERNEL_TOL * om:
                a = alignment(pr.vector, kdir, op.weights)
                if a > KERNEL_ALIGN:
                    is_kernel, kern, align = True, pr.value, a
            if kdir is not None and kern is None and pr is pairs[0]:
                # record the candidate even if it fails the test
                align = alignment(pr.vector, kdir, op.weights)
            if not is_kernel and pr.value < 0:
                neg += 1
        mult = 1 if l == 0 else 2
        total += mult * neg
        sectors.append(SectorSummary(l, [pr.value for pr in pairs], neg,
                                     kern if kern is not None else
                                     (pairs[0].value if kdir is not None else None),
                                     align))
        lowest_nonkernel = min((pr.value for pr in pairs
                                if not (kern is not None and pr.value == kern)),
                               default=np.inf)
        if l >= 1 and lowest_nonkernel > 0:
            break
    else:
        raise InconclusiveError(
            f"sector l={l_max} still has negative eigenvalues; raise l_max")
    return MorseResult(which.value, total, sectors)


def vk_slope(sol, order: int = 4) -> float:
    """⟨L₊⁻¹φ, φ⟩ on the radial sector.

    Raises ConditioningError when L₊,0 has an eigenvalue within 1e-6·ω of
    zero; the solve is never silently projected.
    """
    op = assemble(sol, Which.PLUS, 0, order)
    w = solve(op, sol.phi, cond_tol=1e-6 * sol.params.omega)
    return float(op.weights @ (w * sol.phi))


def psi_field(sol) -> np.ndarray:
    """Ψ = rφ' + φ (= x·∇φ + φ for radial φ)."""
    return sol.grid.nodes * radial_derivative(sol.phi, sol.grid, 1) + sol.phi


def psi_witness(sol, order: int = 4) -> tuple[float, float, float]:
    """(⟨L₊Ψ,Ψ⟩, |⟨Ψ,φ⟩|/(‖Ψ‖‖φ‖), closed-form value)."""
    op = assemble(sol, Which.PLUS, 0, order)
    psi = psi_field(sol)
    w = op.weights
    form = float(w @ (psi * (op.matrix @ psi)))
    orth = alignment(psi, sol.phi, w)
    closed = -integrate(witness_integrand(sol.phi), sol.grid)
    return form, orth, float(closed)


def lplus_phi_form(sol, order: int = 4) -> tuple[float, float]:
    """⟨L₊φ, φ⟩ directly and as -8π∫(exp(4πφ²) - μ)φ⁴."""
    op = assemble(sol, Which.PLUS, 0, order)
    direct = float(op.weights @ (sol.phi * (op.matrix @ sol.phi)))
    phi = sol.phi
    closed = -8 * math.pi * integrate(
        (np.exp(4 * math.pi * phi ** 2) - sol.params.mu) * phi ** 4, sol.grid)
    return direct, float(closed)


def scaling_identity_residual(sol, fraction: float = 0.75,
                              order: int = 4) -> float:
    """‖L₊(rφ') + 2Δφ‖ / ‖Δφ‖ on r < fraction·r_max."""
    op = assemble(sol, Which.PLUS, 0, order)
    grid = sol.grid
    rdphi = grid.nodes * radial_derivative(sol.phi, grid, 1)
    lap = -(laplacian_matrix(grid, 0, order) @ sol.phi)
    res = op.matrix @ rdphi + 2 * lap
    m = interior_mask(grid, fraction)
    w = op.weights[m]
    return float(math.sqrt(w @ res[m] ** 2) / math.sqrt(w @ lap[m] ** 2))


def lminus_block(sol, order: int = 4) -> float:
    """⟨L₋,1⁻¹φ', φ'⟩, the translation entry of the constraint matrix."""
    op = assemble(sol, Which.MINUS, 1, order)
    d = radial_derivative(sol.phi, sol.grid, 1)
    psi = solve(op, d)
    return float(op.weights @ (psi * d))


@dataclass(frozen=True)
class SpectralReport:
    morse_plus: int
    morse_minus: int
    lminus_ground_eig: float
    lplus_kernel_eig_l1: float
    lplus_lowest_eig_l0: float
    vk_slope: float
    psi_form: float
    psi_orth_residual: float
    psi_closed_form: float = float("nan")
    lminus_kernel_alignment: float = float("nan")
    lplus_kernel_alignment: float = float("nan")
    lminus_block: float = float("nan")

    def to_json_obj(self) -> dict:
        return asdict(self)


def spectral_report(sol, l_max: int = 6, order: int = 4) -> SpectralReport:
    mp = morse_index(sol, Which.PLUS, l_max, order=order)
    mm = morse_index(sol, Which.MINUS, l_max, order=order)
    form, orth, closed = psi_witness(sol, order)
    s0m = mm.sectors[0]
    s1p = next(s for s in mp.sectors if s.l == 1)
    return SpectralReport(
        morse_plus=mp.index, morse_minus=mm.index,
        lminus_ground_eig=s0m.kernel, lplus_kernel_eig_l1=s1p.kernel,
        lplus_lowest_eig_l0=mp.sectors[0].eigenvalues[0],
        vk_slope=vk_slope(sol, order), psi_form=form, psi_orth_residual=orth,
        psi_closed_form=closed,
        lminus_kernel_alignment=s0m.kernel_alignment,
        lplus_kernel_alignment=s1p.kernel_alignment,
        lminus_block=lminus_block(sol, order))


@dataclass(frozen=True)
class KreinVerdict:
    n_L: int
    n_D: int
    k_r: int
    unstable: bool


def krein_count(report: SpectralReport) -> KreinVerdict:
    """Evaluate k_r + 2k_c + 2k₀ = n(L) - n(D) for this soliton family.

    n(D) counts negative entries of the constraint matrix, which here is
    diagonal: the slope ⟨L₊⁻¹φ, φ⟩ and the translation entries
    ⟨L₋⁻¹∂φ, ∂φ⟩ (positive, since L₋ > 0 on l = 1).
    """
    n_L = report.morse_plus + report.morse_minus
    if report.morse_minus != 0:
        raise VerdictError("L₋ must be non-negative")
    if not np.isfinite(report.vk_slope) or report.vk_slope == 0:
        raise VerdictError("slope undefined; degenerate radial sector")
    n_D = int(report.vk_slope < 0)
    if np.isfinite(report.lminus_block) and report.lminus_block < 0:
        n_D += 2    # one entry per translation direction
    count = n_L - n_D
    if count < 0:
        raise VerdictError(f"negative count n(L) - n(D) = {count}")
    # with count ≤ 1 the even terms must vanish
    k_r = count if count <= 1 else count % 2
    return KreinVerdict(n_L=n_L, n_D=n_D, k_r=k_r, unstable=k_r > 0)
