import numpy as np
import pytest

from tcvolterra.condexp import FeatureMap
from tcvolterra.errors import InvalidArgumentError
from tcvolterra.grid import MarkGrid, build_partition
from tcvolterra.naderiv import (
    TARGETS,
    duality_check,
    estimate_na_derivative,
    martingale_representation,
    reconstruct,
    relative_l2,
    target_values,
)
from tcvolterra.noise import ito_integral, lambda_integral, mu_of_cells
from tcvolterra.timechange import cell_measures

from conftest import UNIT, make_record, mean_se

FM = FeatureMap("G")


@pytest.fixture(scope="module")
def rec():
    return make_record(n=20_000, steps=16, seed=11)


@pytest.fixture(scope="module")
def wiener():
    return make_record(n=20_000, steps=16, seed=12, rate_b=UNIT, marks=MarkGrid())


def test_single_cell_target_has_indicator_field(rec):
    part = build_partition(rec.grid, rec.noise.marks, 2)
    mu = mu_of_cells(rec.noise, part)
    lam = cell_measures(rec.rates, rec.noise.marks, part)
    k0 = 3
    xi = mu[:, k0]
    fld = estimate_na_derivative(xi, part, rec, FM)
    for k in range(len(part)):
        se = mean_se(xi * mu[:, k] / lam[:, k])[1]
        assert abs(fld.values[:, k].mean() - (1.0 if k == k0 else 0.0)) <= 3 * se + 1e-9


def test_clock_measurable_target_has_zero_field(rec):
    part = build_partition(rec.grid, rec.noise.marks, 3)
    fld = estimate_na_derivative(target_values("Lambda_T", rec), part, rec, FM)
    assert np.max(np.abs(fld.values)) < 1e-6


def test_wiener_square_field_is_twice_B(wiener):
    part = build_partition(wiener.grid, wiener.noise.marks, 2)
    fld = estimate_na_derivative(wiener.noise.B[:, -1] ** 2, part, wiener, FM)
    for k, c in enumerate(part.cells):
        ref = 2 * wiener.noise.B[:, c.i0]
        err = np.sqrt(np.mean((fld.values[:, k] - ref) ** 2))
        assert err <= 0.1 * max(np.sqrt(np.mean(ref**2)), 1.0), (k, err)


def test_reconstruction_of_constant_is_exact(rec):
    part = build_partition(rec.grid, rec.noise.marks, 2)
    xi = np.full(rec.n_paths, 2.25)
    fld = estimate_na_derivative(xi, part, rec, FM)
    np.testing.assert_allclose(reconstruct(xi, fld, rec, FM), 2.25, atol=1e-10)


def test_simple_integrand_recovered(rec):
    part = build_partition(rec.grid, rec.noise.marks, 2)
    phi = np.array([1.0, -0.5, 2.0, 0.0, 0.5, 1.5, -1.0, 0.25])  # one value per cell
    mu = mu_of_cells(rec.noise, part)
    lam = cell_measures(rec.rates, rec.noise.marks, part)
    xi = mu @ phi
    fld = estimate_na_derivative(xi, part, rec, FM)
    for k in range(len(part)):
        se = mean_se(xi * mu[:, k] / lam[:, k])[1]
        assert abs(fld.values[:, k].mean() - phi[k]) <= 3 * se
    assert relative_l2(reconstruct(xi, fld, rec, FM), xi) <= 0.15


def _fields(grid, J):
    M = grid.n_steps
    return np.ones(M), np.ones((M, J))


def test_duality_constant_and_stochastic_integral(rec):
    part = build_partition(rec.grid, rec.noise.marks, 3)
    pb, ph = _fields(rec.grid, 1)
    const = np.ones(rec.n_paths)
    d0 = duality_check(const, pb, ph, estimate_na_derivative(const, part, rec, FM), rec.noise)
    assert abs(d0.rhs) < 1e-8 and abs(d0.lhs) <= 3 * d0.lhs_se
    xi = ito_integral(rec.noise, pb, ph)
    d = duality_check(xi, pb, ph, estimate_na_derivative(xi, part, rec, FM), rec.noise)
    iso = lambda_integral(rec.noise, pb, ph).mean()
    assert d.passed(3.0)
    assert abs(d.lhs - iso) <= 3 * d.lhs_se
    assert abs(d.rhs - iso) <= 0.02 * iso


def test_duality_wiener_square_is_zero(wiener):
    part = build_partition(wiener.grid, wiener.noise.marks, 3)
    xi = wiener.noise.B[:, -1] ** 2
    d = duality_check(xi, np.ones(16), None, estimate_na_derivative(xi, part, wiener, FM), wiener.noise)
    assert d.passed(3.0)
    assert abs(d.lhs) <= 3 * d.lhs_se


def test_martingale_representation_examples(wiener):
    part = build_partition(wiener.grid, wiener.noise.marks, 3)
    const = martingale_representation(np.full(wiener.n_paths, 1.5), part, wiener, FM)
    np.testing.assert_allclose(const.represented, 1.5, atol=1e-10)
    tot = wiener.noise.mu_total()
    rep = martingale_representation(tot[:, -1], part, wiener, FM)
    assert np.max(np.sqrt(np.mean((rep.represented - tot) ** 2, axis=0))) < 0.05
    sq = martingale_representation(wiener.noise.B[:, -1] ** 2, part, wiener, FM)
    # M(t) - M(0) = B(t)^2 - t; increments avoid the sample-mean error in M(0)
    exact = wiener.noise.B**2 - wiener.grid.t
    idx = [c.i1 for c in part.cells]
    gap = (sq.represented[:, idx] - sq.represented[:, :1]) - exact[:, idx]
    for j in range(gap.shape[1]):
        m, se = mean_se(gap[:, j])
        assert abs(m) <= 3 * se + 1e-9
    assert np.all(np.isfinite(sq.discrepancy))


def test_target_names(rec):
    for name in TARGETS:
        assert target_values(name, rec).shape == (rec.n_paths,)
    with pytest.raises(InvalidArgumentError):
        target_values("nope", rec)


def test_bad_inputs(rec):
    part = build_partition(rec.grid, rec.noise.marks, 1)
    with pytest.raises(InvalidArgumentError):
        estimate_na_derivative(np.ones(3), part, rec, FM)
    bad = np.ones(rec.n_paths)
    bad[0] = np.nan
    with pytest.raises(InvalidArgumentError):
        estimate_na_derivative(bad, part, rec, FM)
