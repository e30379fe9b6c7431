import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from expnls.grid import (interior_mask, laplacian_matrix, make_grid,
                         radial_derivative)
from expnls.linop import (ConditioningError, Which, apply, assemble,
                          sector_operator, solve)
from expnls.model import ModelParams, g_fun, lplus_potential

from conftest import solve as solve_profile


def _wnorm(op, v):
    return math.sqrt(op.weights @ (v * v))


def test_potentials(spec10):
    p, phi = spec10.params, spec10.phi
    om = assemble(spec10, Which.MINUS, 0)
    op = assemble(spec10, "plus", 0)
    assert np.allclose(om.potential_values, 1.0 - g_fun(phi ** 2, p))
    assert np.allclose(op.potential_values, 1.0 - lplus_potential(phi, p))


def test_phase_kernel(spec10, spec11):
    for s in (spec10, spec11):
        op = assemble(s, Which.MINUS, 0)
        assert _wnorm(op, apply(op, s.phi)) < 1e-6 * _wnorm(op, s.phi)


def _translation_residual(sol):
    op = assemble(sol, Which.PLUS, 1)
    d = radial_derivative(sol.phi, sol.grid)
    res = apply(op, d)
    # the Dirichlet row at r_max sees φ' ≠ 0; measure away from it
    m = interior_mask(sol.grid)
    return math.sqrt(op.weights[m] @ res[m] ** 2) / _wnorm(op, d)


def test_translation_kernel(spec10_fine):
    assert _translation_residual(spec10_fine) < 1e-4


def test_translation_kernel_converges(spec10):
    coarse = _translation_residual(solve_profile(1.0, 0, width=10.0, n=1024))
    assert math.log2(coarse / _translation_residual(spec10)) > 1.8


@given(st.integers(0, 2**32 - 1))
def test_free_operator_bounded_below(seed):
    g = make_grid(10.0, 256)
    p = ModelParams(1.5, 0)
    op = sector_operator(g, p, np.zeros(256), Which.PLUS, 0)
    u = np.random.default_rng(seed).standard_normal(256)
    assert op.weights @ (u * apply(op, u)) >= 1.5 * (op.weights @ (u * u)) * (1 - 1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_linearity_and_symmetry(seed, l):
    g = make_grid(10.0, 400)
    rng = np.random.default_rng(seed)
    phi = 0.5 * np.exp(-g.nodes ** 2)
    op = sector_operator(g, ModelParams(1.0, 1), phi, Which.MINUS, l)
    u, v = rng.standard_normal((2, 400))
    a, b = rng.standard_normal(2)
    lin = apply(op, a * u + b * v) - a * apply(op, u) - b * apply(op, v)
    scale = np.abs(op.matrix).max() * (abs(a) + abs(b)) * np.max(np.abs(u) + np.abs(v))
    assert np.max(np.abs(lin)) < 1e-12 * scale
    w = op.weights
    sym = w @ (apply(op, u) * v) - w @ (u * apply(op, v))
    assert abs(sym) < 1e-10 * _wnorm(op, u) * _wnorm(op, v) * np.abs(op.matrix).max()


def test_apply_matches_stencil(spec10):
    op = assemble(spec10, Which.PLUS, 2)
    v = np.exp(-spec10.grid.nodes ** 2) * spec10.grid.nodes ** 2
    L = laplacian_matrix(spec10.grid, 2)
    ref = L @ v + op.potential_values * v
    scale = abs(L) @ np.abs(v) + np.abs(op.potential_values * v)
    assert np.all(np.abs(apply(op, v) - ref) <= 1e-12 * scale)
    with pytest.raises(ValueError):
        apply(op, np.zeros(3))


def test_generalized_kernel_solve(spec10):
    op = assemble(spec10, Which.MINUS, 1)
    d = radial_derivative(spec10.phi, spec10.grid)
    psi = solve(op, d)
    assert _wnorm(op, apply(op, psi) - d) < 1e-6


def test_lplus_inverse_phi(spec10):
    op = assemble(spec10, Which.PLUS, 0)
    w = solve(op, spec10.phi)
    assert _wnorm(op, apply(op, w) - spec10.phi) < 1e-10 * _wnorm(op, spec10.phi)


@given(st.integers(0, 2**32 - 1))
def test_solve_apply_identity(seed):
    g = make_grid(10.0, 300)
    phi = 0.4 * np.exp(-g.nodes ** 2)
    op = sector_operator(g, ModelParams(1.0, 0), phi, Which.PLUS, 2)
    b = np.random.default_rng(seed).standard_normal(300)
    x = solve(op, b)
    assert _wnorm(op, apply(op, x) - b) < 1e-10 * _wnorm(op, b) * np.abs(op.matrix).max()


def test_singular_needs_guard(spec10):
    op = assemble(spec10, Which.MINUS, 0)
    rhs = np.exp(-spec10.grid.nodes ** 2)
    with pytest.raises(ConditioningError) as info:
        solve(op, rhs)
    assert abs(info.value.smallest) < 1e-6
    w = op.weights
    rhs = rhs - (w @ (rhs * spec10.phi)) / (w @ spec10.phi ** 2) * spec10.phi
    x = solve(op, rhs, kernel_guard=spec10.phi)
    assert abs(w @ (x * spec10.phi)) < 1e-10 * _wnorm(op, x) * _wnorm(op, spec10.phi)
    assert _wnorm(op, apply(op, x) - rhs) < 1e-8 * _wnorm(op, rhs)
    with pytest.raises(ValueError):
        solve(op, spec10.phi, kernel_guard=spec10.phi)


def test_sector_monotonicity(spec10):
    from expnls.spectral import lowest_eigs
    lows = [lowest_eigs(assemble(spec10, Which.MINUS, l), 1)[0].value for l in range(4)]
    assert all(a < b for a, b in zip(lows, lows[1:]))


def test_potential_csv(spec10, tmp_path):
    op = assemble(spec10, Which.PLUS, 0)
    op.to_csv(tmp_path / "v.csv")
    from expnls.io import read_csv
    head, data = read_csv(tmp_path / "v.csv")
    assert head == ["r", "V"] and np.array_equal(data[:, 1], op.potential_values)
