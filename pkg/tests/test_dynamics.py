import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from expnls.dynamics import (BlowupRow, DynamicsConfig, Outcome, SamplingError,
                             ThresholdError, blowup_experiment, blowup_row,
                             dfp_quotient, evolve, scaled_datum, virial_check)
from expnls.grid import RadialField, make_grid
from expnls.model import ModelParams, g_fun

from conftest import solve


@pytest.fixture(scope="module")
def sol():
    return solve(1.0, 0, width=20.0, n=2048)


def _cfield(fld):
    return RadialField(fld.grid, np.asarray(fld.values, dtype=complex))


def _quotient_mp(z0, z1, mu):
    with mpmath.workdps(60):
        z0, z1 = mpmath.mpf(z0), mpmath.mpf(z1)
        if z0 == z1:
            return float(mpmath.exp(4 * mpmath.pi * z0) - 1 - 4 * mpmath.pi * mu * z0)

        def G(z):
            return (mpmath.exp(4 * mpmath.pi * z) - 1 - 4 * mpmath.pi * z
                    - 8 * mpmath.pi ** 2 * mu * z ** 2) / (4 * mpmath.pi)
        return float((G(z1) - G(z0)) / (z1 - z0))


@given(st.floats(0.0, 1.5), st.floats(-0.5, 0.5), st.sampled_from([0, 1]))
def test_dfp_quotient(z0, dz, mu):
    z1 = max(z0 + dz, 0.0)
    # the 60-digit oracle itself cancels below this separation
    assume(z1 == z0 or abs(z1 - z0) > 1e-8)
    q = dfp_quotient(np.array(z0), np.array(z1), ModelParams(1.0, mu))
    assert q == pytest.approx(_quotient_mp(z0, z1, mu), rel=1e-9, abs=1e-15)


def test_dfp_quotient_limit():
    p = ModelParams(1.0, 1)
    z = np.array([0.1, 0.2])
    assert np.allclose(dfp_quotient(z, z, p), g_fun(z, p), rtol=1e-14)


def test_zero_field_stays_zero():
    grid = make_grid(10.0, 256)
    rep = evolve(RadialField(grid, np.zeros(256, complex)), ModelParams(1.0, 0),
                 DynamicsConfig(t_end=0.2))
    assert rep.outcome is Outcome.COMPLETED
    assert all(np.all(s.field.values == 0) for s in rep.states)


def test_linear_gaussian_variance():
    # i u_t + Δu = 0 from e^{-r²/2}: ‖xu‖² = π + 4πt²; CN error is O(dt²)
    grid = make_grid(30.0, 2048)
    u0 = RadialField(grid, np.exp(-grid.nodes ** 2 / 2).astype(complex))
    errs = []
    for dt in (1e-3, 5e-4):
        rep = evolve(u0, ModelParams(1.0, 0),
                     DynamicsConfig(dt=dt, t_end=1.0, sample_every=0.05, nonlinear=False))
        t = rep.series("t")
        exact = math.pi + 4 * math.pi * t ** 2
        errs.append(np.max(np.abs(rep.series("virial_moment") - exact) / exact))
        assert rep.virial_identity_residual < 1e-3
    assert errs[0] < 5e-6
    assert math.log2(errs[0] / errs[1]) > 1.8


def test_threshold_precondition(sol):
    with pytest.raises(ThresholdError):
        evolve(_cfield(scaled_datum(sol, 1.6)), sol.params)
    with pytest.raises(TypeError):
        evolve(sol.phi, sol.params)


def test_soliton_short_window(sol):
    # e^{iωt}φ is stationary until roundoff along the growing mode surfaces
    T = 0.5
    rep = evolve(_cfield(sol.field), sol.params, DynamicsConfig(t_end=T, sample_every=0.05))
    assert rep.outcome is Outcome.COMPLETED
    dev = max(np.max(np.abs(np.abs(s.field.values) - sol.phi)) for s in rep.states)
    assert dev < 1e-5
    u = rep.states[-1].field.values
    theta = np.angle(u[0] / sol.phi[0])
    assert theta == pytest.approx(sol.params.omega * T, rel=0.01)
    assert rep.mass_drift() < 1e-10
    assert rep.energy_drift() < 1e-9
    assert rep.virial_identity_residual < 1e-3


def test_gauge_covariance(sol):
    cfg = DynamicsConfig(t_end=0.05, sample_every=0.05)
    fld = scaled_datum(sol, 1.02)
    a = evolve(_cfield(fld), sol.params, cfg).states[-1].field.values
    ph = np.exp(0.7j)
    b = evolve(RadialField(fld.grid, ph * fld.values), sol.params, cfg).states[-1].field.values
    assert np.max(np.abs(b - ph * a)) < 1e-12


def test_blowup_lambda_105(sol):
    fld = scaled_datum(sol, 1.05)
    rep = evolve(_cfield(fld), sol.params, DynamicsConfig(sample_every=1e-3))
    assert rep.outcome is Outcome.BLOWUP
    assert rep.states[-1].grad_norm_sq >= 0.95
    g = rep.series("grad_norm_sq")
    tail = g[len(g) // 2:]
    assert np.all(np.diff(tail) > 0)
    assert rep.mass_drift() < 1e-9 and rep.energy_drift() < 1e-6
    # K⁻ trajectory: the virial second derivative stays negative
    assert np.all(rep.series("virial_i") < 0)


def test_virial_self_convergence(sol):
    fld = scaled_datum(sol, 1.05)
    res = []
    for k in (1, 2):
        cfg = DynamicsConfig(dt=1e-4 / k, t_end=0.02, sample_every=1e-3 / k)
        res.append(evolve(_cfield(fld), sol.params, cfg).virial_identity_residual)
    assert res[0] < 5e-2 and res[1] < 0.6 * res[0]


def test_kplus_side_no_blowup(sol):
    row = blowup_row(sol, 0.95, DynamicsConfig(t_end=2.0))
    assert row.virial_i > 0 and row.kset == "KPlus"
    assert row.outcome == Outcome.COMPLETED.value


def test_virial_check_sampling():
    grid = make_grid(10.0, 64)
    rep = evolve(RadialField(grid, np.zeros(64, complex)), ModelParams(1.0, 0),
                 DynamicsConfig(t_end=0.1, sample_every=0.05))
    with pytest.raises(SamplingError):
        virial_check(rep)


def test_blowup_rows(sol):
    rows = blowup_experiment(sol, [1.02, 1.05, 1.10],
                             DynamicsConfig(sample_every=0.01))
    for r in rows:
        assert isinstance(r, BlowupRow)
        assert r.conditions_ok and r.kset == "KMinus"
        assert r.outcome == "BlowupDetected" and r.blowup_time_estimate > 0
    times = [r.blowup_time_estimate for r in rows]
    assert times == sorted(times, reverse=True)
    assert "lambda" in rows[0].to_json_obj()
    with pytest.raises(ThresholdError):
        blowup_experiment(sol, [1.6])
    with pytest.raises(ValueError):
        blowup_experiment(sol, [-1.0])


def test_trajectory_csv(sol, tmp_path):
    rep = evolve(_cfield(scaled_datum(sol, 1.02)), sol.params,
                 DynamicsConfig(t_end=0.02, sample_every=0.01))
    rep.to_csv(tmp_path / "t.csv")
    from expnls.io import read_csv
    head, data = read_csv(tmp_path / "t.csv")
    assert head == ["t", "mass", "energy", "grad_norm_sq", "virial_moment", "virial_i"]
    assert data.shape == (len(rep.states), 6)
