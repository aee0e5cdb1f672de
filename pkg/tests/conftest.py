import numpy as np
import pytest

from tcvolterra.condexp import PathRecord
from tcvolterra.grid import EnsembleHandle, MarkGrid, build_uniform_grid
from tcvolterra.noise import sample_noise
from tcvolterra.timechange import ComponentRate, RateModel, sample_rate_paths

SQRT_B = ComponentRate("sqrt", level=1.0, speed=2.0, mean=1.0, vol=0.5)
UNIT = ComponentRate("constant", level=1.0)
ONE_MARK = MarkGrid(np.array([0.5]), np.array([1.0]))


def make_record(n=2000, seed=0, steps=32, T=1.0, rate_b=SQRT_B, rate_h=UNIT, marks=ONE_MARK) -> PathRecord:
    grid = build_uniform_grid(T, steps)
    ens = EnsembleHandle(n, seed)
    rates = sample_rate_paths(RateModel(rate_b, rate_h), grid, ens)
    return PathRecord(rates, sample_noise(rates, marks, ens))


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


@pytest.fixture(scope="session")
def rec_small():
    return make_record()


@pytest.fixture(scope="session")
def rec_medium():
    return make_record(n=20000, seed=1)


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
