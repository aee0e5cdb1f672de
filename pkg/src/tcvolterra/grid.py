"""Time and mark discretisations, dyadic partitions, and reproducible random streams.

The partition cells ``(s, u] x B`` are the building blocks of the
non-anticipating derivative; ``B`` is either the Gaussian channel ``{0}``
or one atom of the (finite) mark grid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError

GAUSSIAN = -1  # mark-set id of the {0} channel


@dataclass(frozen=True)
class TimeGrid:
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise InvalidArgumentError("time grid needs at least two points")
        if t[0] != 0.0:
            raise InvalidArgumentError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def n_steps(self) -> int:
        return self.t.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def uniform(self) -> bool:
        dt = self.dt
        return bool(np.all(np.abs(dt - dt[0]) <= 1e-12 * abs(dt[0])))

    def __len__(self):
        return self.t.size


def build_uniform_grid(T: float, n_steps: int) -> TimeGrid:
    if not (T > 0) or not np.isfinite(T):
        raise InvalidArgumentError(f"horizon T must be positive, got {T!r}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgumentError(f"n_steps must be a positive integer, got {n_steps!r}")
    n_steps = int(n_steps)
    t = T * np.arange(n_steps + 1) / n_steps
    t[-1] = T
    return TimeGrid(t)


@dataclass(frozen=True)
class MarkGrid:
    """Finitely many nonzero jump sizes with their Levy-measure masses.

    Each atom is its own mark bin. An empty grid means "no jump channel".
    """

    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if z.shape != w.shape or z.ndim != 1:
            raise InvalidArgumentError("marks and weights must be 1-d arrays of equal length")
        if np.any(z == 0):
            raise InvalidArgumentError("mark 0 is reserved for the Gaussian channel")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("mark weights must be finite and nonnegative")
        z.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "weights", w)

    @property
    def n_bins(self) -> int:
        return self.z.size

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.weights * self.z**2))


@dataclass(frozen=True)
class Cell:
    """One partition cell ``(t[i0], t[i1]] x mark_set``; ``mark_set == -1`` is ``{0}``."""

    i0: int
    i1: int
    mark_set: int
    s: float
    u: float

    @property
    def is_gaussian(self) -> bool:
        return self.mark_set == GAUSSIAN

    def contains(self, t: float, mark_set: int) -> bool:
        return self.mark_set == mark_set and self.s < t <= self.u


@dataclass(frozen=True)
class PartitionScheme:
    level: int
    cells: tuple
    grid: TimeGrid
    marks: MarkGrid

    @property
    def n_time_cells(self) -> int:
        return 2**self.level

    @property
    def mark_sets(self) -> list[int]:
        return [GAUSSIAN] + list(range(self.marks.n_bins))

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def locate(self, t: float, mark_set: int) -> int:
        """Index of the unique cell containing ``(t, mark_set)``; -1 outside ``(0, T]``."""
        hits = [k for k, c in enumerate(self.cells) if c.contains(t, mark_set)]
        if len(hits) > 1:
            raise AssertionError("partition cells overlap")
        return hits[0] if hits else -1

    def parent(self, cell: Cell, coarser: "PartitionScheme") -> int:
        for k, c in enumerate(coarser.cells):
            if c.mark_set == cell.mark_set and c.i0 <= cell.i0 and cell.i1 <= c.i1:
                return k
        return -1

    def step_index(self) -> np.ndarray:
        """Map grid step -> time-cell number, shape ``(n_steps,)``."""
        per = self.grid.n_steps // self.n_time_cells
        return np.arange(self.grid.n_steps) // per


def build_partition(grid: TimeGrid, marks: MarkGrid, n: int) -> PartitionScheme:
    if int(n) != n or n < 0:
        raise InvalidArgumentError(f"refinement level must be a nonnegative integer, got {n!r}")
    n = int(n)
    k = 2**n
    if grid.n_steps % k:
        raise InvalidArgumentError(
            f"refinement level {n} needs the step count ({grid.n_steps}) to be divisible by {k}"
        )
    per = grid.n_steps // k
    cells = []
    for m in range(k):
        i0, i1 = m * per, (m + 1) * per
        for ms in [GAUSSIAN] + list(range(marks.n_bins)):
            cells.append(Cell(i0, i1, ms, float(grid.t[i0]), float(grid.t[i1])))
    return PartitionScheme(n, tuple(cells), grid, marks)


def _stream_key(seed: int, name: str) -> np.ndarray:
    h = hashlib.blake2b(f"{int(seed)}/{name}".encode(), digest_size=16).digest()
    return np.frombuffer(h, dtype=np.uint64).copy()


@dataclass(frozen=True)
class EnsembleHandle:
    """Path count plus master seed; hands out one counter-based substream per (path, stream).

    Substream ``(path, name)`` is a Philox generator keyed by a hash of
    ``(seed, name)`` whose counter starts at ``path << 128``, so streams
    are independent of each other and of ``n_paths``.
    """

    n_paths: int
    seed: int = 0

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise InvalidArgumentError(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must fit in an unsigned 64-bit integer")

    def generator(self, path: int, name: str) -> np.random.Generator:
        bitgen = np.random.Philox(key=_stream_key(self.seed, name), counter=[0, 0, int(path), 0])
        return np.random.Generator(bitgen)

    def draw(self, name: str, fn: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
        """Stack ``fn(generator, path)`` over all paths."""
        rows = [np.asarray(fn(self.generator(i, name), i)) for i in range(self.n_paths)]
        return np.stack(rows)

    def normal(self, name: str, shape: Sequence[int] | int) -> np.ndarray:
        return self.draw(name, lambda g, _: g.standard_normal(shape))
