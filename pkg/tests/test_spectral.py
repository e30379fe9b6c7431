import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from expnls.grid import make_grid
from expnls.linop import SectorOperator, Which, assemble
from expnls.model import FOUR_PI, ModelParams, F_mu, f_mu, g_prime, witness_integrand
from expnls.spectral import (KERNEL_TOL, SpectralReport, VerdictError,
                             krein_count, lowest_eigs, lplus_phi_form,
                             morse_index, scaling_identity_residual,
                             spectral_report, vk_slope)

from conftest import solve


@pytest.fixture(scope="module")
def report_fine(spec10_fine):
    return spectral_report(spec10_fine)


def _free(omega=1.0, n=512, r_max=20.0):
    grid = make_grid(r_max, n)
    return SimpleNamespace(grid=grid, params=ModelParams(omega, 0), phi=np.zeros(n))


def test_lowest_eigs_minus_kernel(spec10):
    op = assemble(spec10, Which.MINUS, 0)
    pairs = lowest_eigs(op, 3)
    assert abs(pairs[0].value) < KERNEL_TOL
    w = op.weights
    a = abs(w @ (pairs[0].vector * spec10.phi)) / math.sqrt(w @ spec10.phi ** 2)
    assert a > 0.9999
    assert all(p.residual < 1e-8 * max(1, abs(p.value)) for p in pairs)
    assert [p.value for p in pairs] == sorted(p.value for p in pairs)


def test_lowest_eigs_plus(spec10):
    vals = [p.value for p in lowest_eigs(assemble(spec10, Which.PLUS, 0), 2)]
    assert vals[0] < 0 < vals[1]


def test_dense_and_iterative_agree(spec10):
    op = assemble(spec10, Which.PLUS, 1)
    a = [p.value for p in lowest_eigs(op, 3, dense=True)]
    b = [p.value for p in lowest_eigs(op, 3, dense=False)]
    assert np.allclose(a, b, rtol=1e-9, atol=1e-10)


def test_free_operator():
    free = _free(omega=2.0)
    from expnls.linop import sector_operator
    op = sector_operator(free.grid, free.params, free.phi, Which.MINUS, 0)
    assert lowest_eigs(op, 1)[0].value >= 2.0
    assert morse_index(free, Which.PLUS).index == 0
    with pytest.raises(ValueError):
        lowest_eigs(op, 0)


def test_morse_counts(report_fine):
    assert report_fine.morse_plus == 1
    assert report_fine.morse_minus == 0
    assert abs(report_fine.lminus_ground_eig) < KERNEL_TOL
    assert abs(report_fine.lplus_kernel_eig_l1) < KERNEL_TOL
    assert report_fine.lminus_kernel_alignment > 0.999
    assert report_fine.lplus_kernel_alignment > 0.999


def test_morse_stable_under_wider_box(spec10):
    wide = solve(1.0, 0, width=15.0, n=3072)
    for which, idx in ((Which.PLUS, 1), (Which.MINUS, 0)):
        assert morse_index(spec10, which).index == idx
        assert morse_index(wide, which).index == idx


def test_kernel_convergence():
    ks = []
    for n in (512, 1024, 2048):
        s = solve(1.0, 1, width=10.0, n=n)
        ks.append([abs(lowest_eigs(assemble(s, Which.MINUS, 0), 1)[0].value),
                   abs(lowest_eigs(assemble(s, Which.PLUS, 1), 1)[0].value)])
    ks = np.array(ks)
    # L₋,0 φ vanishes to solver precision at every n: nothing to converge
    assert np.all(ks[:, 0] < 1e-9)
    rates = np.log2(ks[:-1, 1] / ks[1:, 1])
    assert np.all(rates > 2)


def test_vk_slope_baseline(report_fine):
    # regression baseline, ω=1 μ=0 on r ≤ 10 with n=8192
    assert report_fine.vk_slope == pytest.approx(0.11360, rel=1e-4)
    assert report_fine.vk_slope > 0


def test_vk_slope_spectral_expansion(spec10):
    op = assemble(spec10, Which.PLUS, 0)
    B = op.symmetric_matrix.toarray()
    vals, vecs = np.linalg.eigh(B)
    s = np.sqrt(op.weights)
    c = vecs.T @ (s * spec10.phi)
    assert np.sum(c ** 2 / vals) == pytest.approx(vk_slope(spec10), rel=1e-4)


def test_vk_slope_diagonal_operator():
    grid = make_grid(5.0, 64)
    d = np.linspace(1.0, 3.0, 64)
    phi = np.exp(-grid.nodes)
    op = SectorOperator(Which.PLUS, 0, ModelParams(1.0, 0), grid,
                        sp.diags(d).tocsr(), d)
    from expnls.linop import solve as lsolve
    w = lsolve(op, phi)
    assert grid.weights @ (w * phi) == pytest.approx(grid.weights @ (phi ** 2 / d), rel=1e-13)


def test_psi_witness(report_fine):
    assert report_fine.psi_orth_residual < 1e-6
    assert report_fine.psi_form < 0 and report_fine.psi_closed_form < 0
    assert report_fine.psi_form == pytest.approx(report_fine.psi_closed_form, rel=1e-3)
    assert report_fine.psi_form == pytest.approx(-1.58863, rel=1e-4)


@given(st.floats(0.01, 1.5))
def test_closed_form_mu_independent(phi):
    z = phi * phi
    vals = []
    for mu in (0, 1):
        p = ModelParams(1.0, mu)
        # L₊Ψ·Ψ integrand: 4fφ - 8F - 2g'(φ²)φ⁴, written through the model
        vals.append(4 * f_mu(phi, p) * phi - 8 * F_mu(phi, p)
                    - 2 * g_prime(z, p) * z * z)
    assert vals[0] == pytest.approx(vals[1], rel=1e-9, abs=1e-12)
    assert vals[0] == pytest.approx(-FOUR_PI * witness_integrand(phi) / FOUR_PI,
                                    rel=1e-8, abs=1e-12)


def test_integrand_nonnegative_on_profile(spec10, spec11):
    for s in (spec10, spec11):
        v = witness_integrand(s.phi)
        assert np.all(v >= 0)
        assert np.all(v[s.phi > 1e-3] > 0)


def test_lplus_phi_form(spec10_fine):
    direct, closed = lplus_phi_form(spec10_fine)
    assert direct < 0
    assert direct == pytest.approx(closed, rel=1e-5)


def test_scaling_identity(spec10_fine, spec11):
    assert scaling_identity_residual(spec10_fine) < 1e-4
    assert scaling_identity_residual(solve(1.0, 1, width=10.0, n=8192)) < 1e-4


def _report(**kw):
    base = dict(morse_plus=1, morse_minus=0, lminus_ground_eig=0.0,
                lplus_kernel_eig_l1=0.0, lplus_lowest_eig_l0=-1.0,
                vk_slope=0.1, psi_form=-1.0, psi_orth_residual=0.0, lminus_block=1.0)
    base.update(kw)
    return SpectralReport(**base)


def test_krein_examples(report_fine):
    assert krein_count(report_fine).unstable
    v = krein_count(_report())
    assert (v.n_L, v.n_D, v.k_r, v.unstable) == (1, 0, 1, True)
    v = krein_count(_report(vk_slope=-0.1))
    assert v.k_r == 0 and not v.unstable
    v = krein_count(_report(morse_plus=0, vk_slope=0.1))
    assert v.k_r == 0
    with pytest.raises(VerdictError):
        krein_count(_report(morse_minus=1))
    with pytest.raises(VerdictError):
        krein_count(_report(vk_slope=float("nan")))
    with pytest.raises(VerdictError):
        krein_count(_report(morse_plus=0, vk_slope=-0.1))


def test_report_json(report_fine):
    obj = report_fine.to_json_obj()
    assert obj["morse_plus"] == 1 and "vk_slope" in obj
