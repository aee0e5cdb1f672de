import numpy as np
import pytest

from tcvolterra.errors import NumericalBlowupError, UnsupportedModelError
from tcvolterra.grid import MarkGrid
from tcvolterra.volterra import (
    ControlPolicy,
    VolterraModel,
    additive_model,
    bump,
    exponential_kernel_model,
    linear_model,
    solve_differential,
    solve_direct,
    solve_picard,
)

from conftest import ONE_MARK, UNIT, make_record

ZERO = ControlPolicy.constant(0.0)


def test_linear_drift_matches_exponential_within_euler_error():
    errs = []
    for steps in (32, 64):
        rec = make_record(n=2, steps=steps, marks=MarkGrid())
        X = solve_direct(linear_model(r=0.5, sigma=0.0), ZERO, rec.noise, rec.rates).X
        errs.append(np.max(np.abs(X[0] - np.exp(0.5 * rec.grid.t))))
        # left-point sum X_m = X0 + sum r X_k dt unrolls to (1 + r dt)^m
        np.testing.assert_allclose(X[0], (1 + 0.5 / steps) ** np.arange(steps + 1), rtol=1e-13)
    assert errs[0] < 0.5 * np.exp(0.5) / 32
    assert 1.5 <= errs[0] / errs[1] <= 3.0


def test_additive_model_unrolls_to_noise(rec_small):
    nz, rates = rec_small.noise, rec_small.rates
    X = solve_direct(additive_model(X0=0.3), ZERO, nz, rates).X
    np.testing.assert_allclose(X, 0.3 + nz.mu_total(), atol=1e-12)


def test_zero_is_a_fixed_point(rec_small):
    X = solve_direct(linear_model(r=0.7, sigma=0.4, X0=0.0), ZERO, rec_small.noise, rec_small.rates).X
    assert np.all(X == 0.0)


def test_picard_additive_converges_in_one_iteration(rec_small):
    res = solve_picard(additive_model(), ZERO, rec_small.noise, rec_small.rates)
    assert res.converged and res.converged_at == 1
    assert res.sup_diffs[-1] == 0.0


def test_picard_single_iteration_returns_first_iterate(rec_small):
    m = linear_model(r=0.5, sigma=0.0)
    with pytest.warns(RuntimeWarning):
        res = solve_picard(m, ZERO, rec_small.noise, rec_small.rates, n_iter=1)
    # X^1(t) = X0 + r X0 t on the grid
    np.testing.assert_allclose(res.state.X[0], 1 + 0.5 * rec_small.grid.t, rtol=1e-13)


def test_picard_decay_is_super_geometric(rec_small):
    m = linear_model(r=0.5, sigma=0.0)
    with pytest.warns(RuntimeWarning):
        res = solve_picard(m, ZERO, rec_small.noise, rec_small.rates, n_iter=8, tol=0.0, keep_iterates=True)
    d = np.array(res.sup_diffs)
    ratios = d[1:] / d[:-1]
    assert np.all(np.diff(d) < 0)
    assert np.all(np.diff(ratios) < 0)  # ratio shrinks like Kt/(n+1)
    direct = solve_direct(m, ZERO, rec_small.noise, rec_small.rates).X
    assert np.max(np.abs(res.state.X - direct)) < d[-1] * 2


def test_convolution_free_schemes_agree(rec_small):
    m = linear_model(r=0.3, sigma=0.4)
    pol = ControlPolicy.feedback(lambda t, x, lam: 0.1 * x)
    a = solve_direct(m, pol, rec_small.noise, rec_small.rates).X
    b = solve_differential(m, pol, rec_small.noise, rec_small.rates).state.X
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_exponential_kernel_gap_halves_with_step():
    gaps = []
    for steps in (32, 64, 128):
        rec = make_record(n=2, steps=steps, rate_b=UNIT, marks=MarkGrid())
        m = exponential_kernel_model(rate=1.0, sigma=0.0)
        a = solve_direct(m, ZERO, rec.noise, rec.rates).X
        b = solve_differential(m, ZERO, rec.noise, rec.rates).state.X
        gaps.append(np.max(np.abs(a - b)))
    r = np.array(gaps[:-1]) / np.array(gaps[1:])
    assert np.all((r >= 1.5) & (r <= 3.0)), r


def test_jump_kernel_accumulator_matches_double_sum():
    # kappa(t, s, z) = z (t - s) on the jump channel; d_t kappa = z
    rec = make_record(n=200, steps=32, seed=3, marks=ONE_MARK)
    m = VolterraModel(
        b=lambda t, s, lam, u, x: 0 * x,
        kappa=lambda t, s, z, lam, u, x: np.asarray(z) * (t - s) + 0 * x,
        X0=1.0,
        dt_b=lambda t, s, lam, u, x: 0 * x,
        dt_kappa=lambda t, s, z, lam, u, x: np.asarray(z) + 0 * x,
    )
    res = solve_differential(m, ZERO, rec.noise, rec.rates)
    eta = rec.noise.eta
    np.testing.assert_allclose(res.A_kappa, eta, rtol=1e-10, atol=1e-12)
    direct = solve_direct(m, ZERO, rec.noise, rec.rates).X
    t = rec.grid.t
    z = rec.noise.marks.z
    ref = np.array([1.0 + np.sum((t[k] - t[:k]) * (rec.noise.H_tilde[:, :k] @ z), axis=1) for k in range(33)]).T
    np.testing.assert_allclose(direct, ref, rtol=1e-10, atol=1e-12)


def test_missing_time_derivative_is_reported(rec_small):
    m = VolterraModel(b=lambda t, s, lam, u, x: np.exp(-(t - s)) * x, kappa=lambda t, s, z, lam, u, x: 0 * x, X0=1.0)
    with pytest.raises(UnsupportedModelError):
        solve_differential(m, ZERO, rec_small.noise, rec_small.rates)
    fd = VolterraModel(m.b, m.kappa, 1.0, finite_difference=True)
    ref = exponential_kernel_model(rate=1.0)
    a = solve_differential(fd, ZERO, rec_small.noise, rec_small.rates).state.X
    b = solve_differential(ref, ZERO, rec_small.noise, rec_small.rates).state.X
    np.testing.assert_allclose(a, b, rtol=1e-6)


def test_blowup_reports_index():
    rec = make_record(n=3, steps=32, marks=MarkGrid())
    with pytest.raises(NumericalBlowupError) as info:
        solve_direct(linear_model(r=200.0, sigma=0.0), ZERO, rec.noise, rec.rates)
    assert info.value.index[1] > 0


def test_policy_bounds_and_perturbation():
    base = ControlPolicy.constant(0.9, bounds=(0.0, 1.0))
    x = np.ones(3)
    assert np.all(base(0, 0.0, x, None) == 0.9)
    pert = ControlPolicy.perturbed(base, np.ones(5), 0.5)
    assert np.all(pert(0, 0.0, x, None) == 1.0)  # clipped
    b = bump(type("G", (), {"t": np.linspace(0, 1, 11), "T": 1.0})(), 0.3, 0.2)
    assert b.sum() == 3 and b[3] == 1 and b[5] == 1
