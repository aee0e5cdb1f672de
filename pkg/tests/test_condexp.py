import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcvolterra.condexp import FeatureMap, conditional_expectation, fit_conditional, ridge_solve, tower_check
from tcvolterra.errors import InvalidArgumentError, SingularRegressionError

from conftest import make_record, mean_se


def test_constant_target_is_reproduced(rec_small):
    fit = fit_conditional(np.full(rec_small.n_paths, 3.5), FeatureMap("F").block(rec_small, 10))
    np.testing.assert_allclose(fit.fitted, 3.5, atol=1e-12)
    assert fit.r2 == 1.0


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2))
@settings(max_examples=15, deadline=None)
def test_realisable_target_is_exact(a, b, c):
    rec = make_record(n=1000, steps=16, seed=1)
    B, L = rec.noise.B[:, 8], rec.rates.lambda_B[:, 8]
    y = a + b * B + c * B * L
    fit = fit_conditional(y, FeatureMap("F").block(rec, 8))
    np.testing.assert_allclose(fit.fitted, y, atol=1e-8 * (1 + np.abs(y).max()))
    assert fit.r2 >= 1 - 1e-10 or np.ptp(y) < 1e-12


def test_martingale_increment_predicts_zero():
    rec = make_record(n=50_000, steps=16, seed=2)
    i = 8
    inc = rec.noise.B[:, -1] - rec.noise.B[:, i]
    pred = conditional_expectation(inc, rec, i, FeatureMap("F"))
    # strata on the current B value
    q = np.quantile(rec.noise.B[:, i], [0, 0.25, 0.5, 0.75, 1.0])
    for lo, hi in zip(q[:-1], q[1:]):
        sel = (rec.noise.B[:, i] >= lo) & (rec.noise.B[:, i] <= hi)
        m, se = mean_se(inc[sel])
        assert abs(pred[sel].mean()) <= 3 * se


def test_tower_trivial_cases(rec_small):
    fm = FeatureMap("G")
    assert tower_check(np.ones(rec_small.n_paths), 5, 20, rec_small, fm).distance < 1e-12
    y = rec_small.noise.B[:, -1] ** 2
    # the ridge penalty (1e-8 relative) makes the projection idempotent only up to that level
    assert tower_check(y, 7, 7, rec_small, fm).relative < 1e-6
    with pytest.raises(InvalidArgumentError):
        tower_check(y, 9, 3, rec_small, fm)


def test_tower_smooth_target_large_sample():
    rec = make_record(n=100_000, steps=16, seed=3)
    y = np.sin(rec.noise.B[:, -1]) + rec.rates.cum_B[:, -1]
    rep = tower_check(y, 4, 12, rec, FeatureMap("F"))
    assert rep.relative <= 0.1


def test_g_flow_sees_the_future_clock(rec_small):
    LT = rec_small.rates.cum_B[:, -1]
    g = conditional_expectation(LT, rec_small, 0, FeatureMap("G"))
    f = conditional_expectation(LT, rec_small, 0, FeatureMap("F"))
    np.testing.assert_allclose(g, LT, atol=1e-8)
    assert np.std(f) < 1e-8  # nothing is known at time 0 under F


def test_too_few_paths_rejected():
    rec = make_record(n=30, steps=8)
    with pytest.raises(InvalidArgumentError):
        fit_conditional(rec.noise.B[:, -1], FeatureMap("G").block(rec, 4))


def test_ridge_rejects_rank_deficient_design():
    A = np.column_stack([np.ones(50), np.zeros(50)])
    with pytest.raises(SingularRegressionError):
        ridge_solve(A, np.ones(50), ridge=0.0)
    coef, cond = ridge_solve(A, np.ones(50))
    assert coef[0] == pytest.approx(1.0) and np.isfinite(cond)
