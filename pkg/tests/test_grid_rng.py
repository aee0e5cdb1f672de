import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcvolterra.errors import InvalidArgumentError
from tcvolterra.grid import GAUSSIAN, EnsembleHandle, MarkGrid, TimeGrid, build_partition, build_uniform_grid


def test_uniform_grid_endpoints_and_steps():
    g = build_uniform_grid(2.0, 8)
    assert g.t[0] == 0.0 and g.t[-1] == 2.0
    assert g.n_steps == 8 and len(g) == 9
    np.testing.assert_allclose(g.dt, 0.25)
    assert g.uniform


@pytest.mark.parametrize("T, n", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
def test_uniform_grid_rejects_bad_input(T, n):
    with pytest.raises(InvalidArgumentError):
        build_uniform_grid(T, n)


def test_grid_rejects_non_increasing_times():
    with pytest.raises(InvalidArgumentError):
        TimeGrid(np.array([0.0, 0.5, 0.5, 1.0]))


def test_mark_grid_validation():
    with pytest.raises(InvalidArgumentError):
        MarkGrid(np.array([0.0]), np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        MarkGrid(np.array([1.0]), np.array([-1.0]))
    with pytest.raises(InvalidArgumentError):
        MarkGrid(np.array([1.0, 2.0]), np.array([1.0]))
    m = MarkGrid(np.array([-1.0, 2.0]), np.array([0.5, 0.25]))
    assert m.n_bins == 2
    assert m.second_moment == pytest.approx(0.5 + 1.0)
    assert MarkGrid().n_bins == 0


@given(level=st.integers(0, 4), n_marks=st.integers(0, 3))
@settings(max_examples=30, deadline=None)
def test_partition_tiles_time_and_marks(level, n_marks):
    grid = build_uniform_grid(1.0, 16)
    marks = MarkGrid(np.arange(1, n_marks + 1, dtype=float), np.ones(n_marks))
    part = build_partition(grid, marks, level)
    assert len(part) == 2**level * (1 + n_marks)
    # every (step, mark set) pair lies in exactly one cell
    for ms in [GAUSSIAN] + list(range(n_marks)):
        cover = np.zeros(grid.n_steps, int)
        for c in part.cells:
            if c.mark_set == ms:
                cover[c.i0:c.i1] += 1
        assert np.all(cover == 1)
    for t in (0.01, 0.5, 1.0):
        assert part.locate(t, GAUSSIAN) >= 0
    assert part.locate(0.0, GAUSSIAN) == -1


def test_partition_refines_previous_level():
    grid = build_uniform_grid(1.0, 16)
    marks = MarkGrid(np.array([1.0]), np.array([1.0]))
    coarse, fine = build_partition(grid, marks, 2), build_partition(grid, marks, 3)
    for c in fine.cells:
        k = fine.parent(c, coarse)
        p = coarse.cells[k]
        assert p.mark_set == c.mark_set and p.s <= c.s and c.u <= p.u


def test_partition_requires_divisible_step_count():
    with pytest.raises(InvalidArgumentError):
        build_partition(build_uniform_grid(1.0, 10), MarkGrid(), 2)


def test_ensemble_is_reproducible():
    a = EnsembleHandle(4, 123).normal("x", 5)
    b = EnsembleHandle(4, 123).normal("x", 5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, EnsembleHandle(4, 124).normal("x", 5))
    assert not np.array_equal(a, EnsembleHandle(4, 123).normal("y", 5))


@given(seed=st.integers(0, 2**64 - 1), n=st.integers(1, 6), extra=st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_path_streams_do_not_depend_on_ensemble_size(seed, n, extra):
    small = EnsembleHandle(n, seed).normal("noise", 3)
    big = EnsembleHandle(n + extra, seed).normal("noise", 3)
    np.testing.assert_array_equal(small, big[:n])


def test_streams_are_uncorrelated_across_paths():
    z = EnsembleHandle(4000, 9).normal("x", 2)
    r = np.corrcoef(z[:-1, 0], z[1:, 0])[0, 1]
    assert abs(r) < 4 / np.sqrt(4000)


@pytest.mark.parametrize("n, seed", [(0, 0), (3, -1), (3, 2**64)])
def test_ensemble_rejects_bad_input(n, seed):
    with pytest.raises(InvalidArgumentError):
        EnsembleHandle(n, seed)
