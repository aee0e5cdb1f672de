"""Time-change rates lambda = (lambda^B, lambda^H) and the random measure Lambda they induce."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .grid import Cell, EnsembleHandle, MarkGrid, PartitionScheme, TimeGrid

KINDS = ("constant", "piecewise", "sqrt")


@dataclass(frozen=True)
class ComponentRate:
    """Law of one rate component.

    kind ``constant``: ``level``.
    kind ``piecewise``: ``breaks`` (increasing, first 0) and ``levels``; the
    rate equals ``levels[k]`` on ``[breaks[k], breaks[k+1])``.
    kind ``sqrt``: mean-reverting square-root diffusion
    ``d lam = speed (mean - lam) dt + vol sqrt(lam) dW`` from ``level``.
    """

    kind: str = "constant"
    level: float = 1.0
    breaks: tuple = ()
    levels: tuple = ()
    speed: float = 0.0
    mean: float = 0.0
    vol: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown rate kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "constant" and not self.level >= 0:
            raise InvalidArgumentError("constant rate level must be nonnegative")
        if self.kind == "piecewise":
            b, lv = np.asarray(self.breaks, float), np.asarray(self.levels, float)
            if b.size == 0 or b.shape != lv.shape or b[0] != 0 or np.any(np.diff(b) <= 0):
                raise InvalidArgumentError("piecewise rate needs increasing breaks starting at 0, one level each")
            if np.any(lv < 0):
                raise InvalidArgumentError("piecewise rate levels must be nonnegative")
        if self.kind == "sqrt":
            if not (self.level >= 0 and self.mean >= 0 and self.speed >= 0 and self.vol >= 0):
                raise InvalidArgumentError("square-root rate parameters must be nonnegative")

    @property
    def stochastic(self) -> bool:
        return self.kind == "sqrt" and self.vol > 0

    def values(self, grid: TimeGrid, z: np.ndarray | None = None) -> np.ndarray:
        """Rate on the grid; ``z`` holds standard normals ``(n, n_steps)`` for the sqrt kind."""
        n = 1 if z is None else z.shape[0]
        t = grid.t
        if self.kind == "constant":
            return np.full((n, t.size), float(self.level))
        if self.kind == "piecewise":
            k = np.searchsorted(np.asarray(self.breaks, float), t, side="right") - 1
            return np.broadcast_to(np.asarray(self.levels, float)[k], (n, t.size)).copy()
        lam = np.empty((n, t.size))
        lam[:, 0] = self.level
        dt = grid.dt
        for i in range(grid.n_steps):
            cur = lam[:, i]
            nxt = cur + self.speed * (self.mean - cur) * dt[i]
            if z is not None:
                nxt = nxt + self.vol * np.sqrt(cur * dt[i]) * z[:, i]
            lam[:, i + 1] = np.maximum(nxt, 0.0)
        return lam

    def cumulative(self, grid: TimeGrid, lam: np.ndarray) -> np.ndarray:
        if self.kind == "piecewise":
            # exact integral; trapezoid would smear the jumps
            b = np.append(np.asarray(self.breaks, float), np.inf)
            lv = np.asarray(self.levels, float)
            t = grid.t[:, None]
            overlap = np.clip(np.minimum(t, b[1:]) - b[:-1], 0.0, None)
            return np.broadcast_to(overlap @ lv, lam.shape).copy()
        return trapezoid_cumulative(grid, lam)


def trapezoid_cumulative(grid: TimeGrid, lam: np.ndarray) -> np.ndarray:
    lam = np.atleast_2d(lam)
    inc = 0.5 * (lam[:, 1:] + lam[:, :-1]) * grid.dt
    out = np.zeros_like(lam, dtype=float)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


@dataclass(frozen=True)
class RateModel:
    b: ComponentRate = field(default_factory=ComponentRate)
    h: ComponentRate = field(default_factory=ComponentRate)
    common_factor: bool = False  # drive both sqrt components with the same normals

    @property
    def stochastic(self) -> bool:
        return self.b.stochastic or self.h.stochastic


@dataclass(frozen=True)
class RatePath:
    """One realisation of the rates on the grid, with cumulative Lambda."""

    grid: TimeGrid
    lambda_B: np.ndarray
    lambda_H: np.ndarray
    cum_Lambda_B: np.ndarray
    cum_Lambda_H: np.ndarray

    @classmethod
    def from_values(cls, grid, lambda_B, lambda_H=None):
        lb = np.asarray(lambda_B, float)
        lh = np.zeros_like(lb) if lambda_H is None else np.asarray(lambda_H, float)
        return cls(grid, lb, lh, trapezoid_cumulative(grid, lb)[0], trapezoid_cumulative(grid, lh)[0])


@dataclass(frozen=True)
class RateEnsemble:
    """All paths' rates; arrays have shape ``(n_paths, n_points)``."""

    grid: TimeGrid
    lambda_B: np.ndarray
    lambda_H: np.ndarray
    cum_B: np.ndarray
    cum_H: np.ndarray
    model: RateModel | None = None

    @property
    def n_paths(self) -> int:
        return self.lambda_B.shape[0]

    @property
    def dLambda_B(self) -> np.ndarray:
        """Conditional variance of each Gaussian step, ``(n, n_steps)``."""
        return np.diff(self.cum_B, axis=1)

    @property
    def dLambda_H(self) -> np.ndarray:
        return np.diff(self.cum_H, axis=1)

    @property
    def deterministic(self) -> bool:
        return bool(
            np.all(self.lambda_B == self.lambda_B[:1]) and np.all(self.lambda_H == self.lambda_H[:1])
        )

    def __getitem__(self, i) -> RatePath:
        return RatePath(self.grid, self.lambda_B[i], self.lambda_H[i], self.cum_B[i], self.cum_H[i])

    def __len__(self):
        return self.n_paths

    @classmethod
    def from_paths(cls, paths):
        paths = list(paths)
        g = paths[0].grid
        return cls(
            g,
            np.stack([p.lambda_B for p in paths]),
            np.stack([p.lambda_H for p in paths]),
            np.stack([p.cum_Lambda_B for p in paths]),
            np.stack([p.cum_Lambda_H for p in paths]),
        )


def sample_rate_paths(model: RateModel, grid: TimeGrid, ens: EnsembleHandle) -> RateEnsemble:
    n, m = ens.n_paths, grid.n_steps
    z_b = ens.normal("rate_B", m) if model.b.stochastic else None
    if model.h.stochastic:
        z_h = z_b if (model.common_factor and z_b is not None) else ens.normal("rate_H", m)
    else:
        z_h = None
    lam_b = np.broadcast_to(model.b.values(grid, z_b), (n, m + 1)).copy()
    lam_h = np.broadcast_to(model.h.values(grid, z_h), (n, m + 1)).copy()
    return RateEnsemble(
        grid, lam_b, lam_h, model.b.cumulative(grid, lam_b), model.h.cumulative(grid, lam_h), model
    )


def measure_of_cell(path: RatePath, marks: MarkGrid, cell: Cell) -> float:
    """Lambda-mass of a cell for one path."""
    n = path.grid.n_steps
    if not (0 <= cell.i0 < cell.i1 <= n):
        raise InvalidArgumentError(f"cell steps [{cell.i0}, {cell.i1}) outside grid with {n} steps")
    if cell.is_gaussian:
        return float(path.cum_Lambda_B[cell.i1] - path.cum_Lambda_B[cell.i0])
    if not 0 <= cell.mark_set < marks.n_bins:
        raise InvalidArgumentError(f"mark bin {cell.mark_set} not in mark grid")
    return float((path.cum_Lambda_H[cell.i1] - path.cum_Lambda_H[cell.i0]) * marks.weights[cell.mark_set])


def cell_measures(rates: RateEnsemble, marks: MarkGrid, partition: PartitionScheme) -> np.ndarray:
    """Lambda(cell) for every path and cell, ``(n_paths, n_cells)``."""
    out = np.empty((rates.n_paths, len(partition)))
    for k, c in enumerate(partition.cells):
        if c.is_gaussian:
            out[:, k] = rates.cum_B[:, c.i1] - rates.cum_B[:, c.i0]
        else:
            out[:, k] = (rates.cum_H[:, c.i1] - rates.cum_H[:, c.i0]) * marks.weights[c.mark_set]
    return out
