import math

import numpy as np
import pytest

from tcvolterra.errors import InvalidArgumentError
from tcvolterra.grid import MarkGrid
from tcvolterra.harvest import (
    HarvestModel,
    adjoint_bsde,
    adjoint_formula,
    evaluate_J,
    relative_discrepancy,
    simulate,
    solve_candidate,
    tilde_r,
)

from conftest import UNIT, make_record


def _det(steps=100, n=40):
    return make_record(n=n, steps=steps, seed=1, rate_b=UNIT, marks=MarkGrid())


DET = dict(sigma=0.0, K=2.0, delta=0.1)


def test_tilde_r_constant_and_exponential():
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(tilde_r(t, HarvestModel.constant_rate(0.5)), 0.5, atol=1e-15)
    m = HarvestModel.exponential_rate(0.3, 0.4, 1.5)
    # r(t,t) + int_0^t d_t r(t,s) ds = r0 + c exp(-kappa t)
    np.testing.assert_allclose(tilde_r(t, m), 0.3 + 0.4 * np.exp(-1.5 * t), atol=1e-13)
    assert tilde_r(0.0, m)[0] == pytest.approx(m.r(0.0, 0.0), abs=1e-15)


def test_parameter_validation():
    for kw in (dict(K=0.0), dict(K=-1.0), dict(X0=0.0), dict(delta=0.0), dict(u_max=0.0)):
        with pytest.raises(InvalidArgumentError):
            HarvestModel.constant_rate(0.5, **kw)
    with pytest.raises(InvalidArgumentError):
        HarvestModel.constant_rate(0.5, sigma=-1.0).sigma_on([0.0])


def test_zero_control_gives_zero_adjoint_and_value(rec_small):
    m = HarvestModel.exponential_rate(0.3, 0.4, 1.0, sigma=0.2, K=2.0, delta=0.1)
    st = simulate(m, 0.0, rec_small)
    est = adjoint_formula(m, 0.0, rec_small, st)
    assert np.all(est.pathwise == 0) and np.max(np.abs(est.conditional)) < 1e-12
    assert evaluate_J(m, st) == (0.0, 0.0)


def test_state_positive_and_deterministic_exact():
    rec = _det()
    m = HarvestModel.constant_rate(0.5, **DET)
    st = simulate(m, 0.3, rec)
    # log-Euler is exact for a constant drift
    np.testing.assert_allclose(st.X, np.exp((0.5 - 0.6) * rec.grid.t)[None, :] * np.ones((rec.n_paths, 1)), rtol=1e-13)
    stoch = simulate(HarvestModel.constant_rate(0.5, sigma=0.8, K=2.0), 1.0, make_record(n=500, steps=50, marks=MarkGrid()))
    assert np.all(stoch.X > 0)


def test_left_sum_value():
    rec = _det()
    m = HarvestModel.constant_rate(0.5, **DET)
    g = rec.grid
    u = 0.7
    X = np.exp((0.5 - 2.0 * u) * g.t)
    oracle = math.fsum(math.exp(-0.1 * (1 - g.t[i])) * u * X[i] * g.dt[i] for i in range(g.n_steps))
    J, se = evaluate_J(m, simulate(m, u, rec))
    assert J == pytest.approx(oracle, rel=1e-13) and se < 1e-15  # identical paths


def test_deterministic_adjoint_matches_closed_form():
    rec = _det(steps=400)
    m = HarvestModel.constant_rate(0.5, **DET)
    u = 0.6
    est = adjoint_formula(m, u, rec, project="mean")
    b = 0.5 - 2.0 * u + 0.1
    t = rec.grid.t
    exact = u * np.exp(-0.1 * (1 - t)) * np.expm1(b * (1 - t)) / b
    assert np.max(np.abs(est.conditional[0] - exact)) <= 2 * rec.grid.dt[0]
    assert np.all(est.conditional[:, -1] == 0)


def test_terminal_adjoint_is_zero_for_large_K():
    rec = make_record(n=1000, steps=20, seed=4, marks=MarkGrid())
    m = HarvestModel.constant_rate(0.5, sigma=0.2, K=50.0)
    st = simulate(m, 0.5, rec)
    sol, proj = adjoint_bsde(m, st, rec)
    assert np.all(sol.p[:, -1] == 0) and np.all(proj[:, -1] == 0)
    assert np.all(adjoint_formula(m, 0.5, rec, st).pathwise[:, -1] == 0)


def test_adjoint_routes_agree():
    rec = make_record(n=4000, steps=40, seed=6, marks=MarkGrid())
    m = HarvestModel.exponential_rate(0.3, 0.4, 1.0, sigma=0.2, K=2.0, delta=0.1)
    u = np.where(rec.grid.t > 0.5, 1.0, 0.0)
    st = simulate(m, u, rec)
    _, pb = adjoint_bsde(m, st, rec)
    pf = adjoint_formula(m, u, rec, st).conditional
    assert relative_discrepancy(pb, pf) < 0.05


def test_deterministic_candidate_switch_time():
    rec = _det(steps=200)
    m = HarvestModel.constant_rate(0.5, **DET)
    sol = solve_candidate(m, rec)
    assert sol.converged
    # single switch 0 -> u_max at T - log(1 + b/K)/b with b = r - K + delta
    b = 0.5 - 2.0 + 0.1
    ts = 1 - math.log(1 + b / 2.0) / b
    assert set(np.unique(sol.u_hat[:-1])) <= {0.0, 1.0}
    on = np.nonzero(sol.u_hat[:-1] == 1.0)[0]
    assert np.all(np.diff(on) == 1) and on[-1] == rec.grid.n_steps - 1
    assert abs(rec.grid.t[on[0]] - ts) <= 2 * rec.grid.dt[0]
    for u0 in np.linspace(0, 1, 11):
        assert sol.J[0] >= evaluate_J(m, simulate(m, u0, rec))[0]


def test_drop_effort_term_changes_adjoint():
    rec = _det()
    a = adjoint_formula(HarvestModel.constant_rate(0.5, **DET), 0.5, rec, project="mean").conditional
    b = adjoint_formula(HarvestModel.constant_rate(0.5, drop_effort_term=True, **DET), 0.5, rec, project="mean").conditional
    assert np.all(b[0, :-2] > a[0, :-2]) and b[0, -2] == a[0, -2]
