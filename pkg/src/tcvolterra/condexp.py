"""Regression estimates of E[. | F_t] and E[. | G_t].

F-flow features at grid index ``i`` read only information up to ``t_i``:
state, current rates, Lambda_t, B_t and the compensated jump sum. G-flow
features add a finite summary of the whole rate path (Lambda_T plus ``k``
equispaced rate samples), the declared stand-in for the sigma-field of
the time change.

Bases are global polynomials in standardised features, fitted by ridge
least squares on the normal equations (the intercept is not penalised).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, SingularRegressionError
from .noise import NoiseEnsemble
from .timechange import RateEnsemble

RIDGE = 1e-8
MAX_COND = 1e14


@dataclass
class PathRecord:
    """Everything observed along the ensemble: rates, noise and (optionally) a state process."""

    rates: RateEnsemble
    noise: NoiseEnsemble
    X: np.ndarray | None = None
    extra: dict = field(default_factory=dict)  # name -> (n, M+1) adapted processes

    @property
    def n_paths(self) -> int:
        return self.noise.n_paths

    @property
    def grid(self):
        return self.noise.grid

    def with_state(self, X) -> "PathRecord":
        return PathRecord(self.rates, self.noise, X, dict(self.extra))


@dataclass
class FeatureBlock:
    core: np.ndarray  # (n, kc) expanded polynomially
    summary: np.ndarray  # (n, ks) entered linearly
    names: list

    @property
    def n(self) -> int:
        return self.core.shape[0]


@dataclass(frozen=True)
class FeatureMap:
    flow: str = "G"
    degree: int = 2
    k_summary: int = 8
    use_state: bool = True
    use_noise: bool = True
    extra: tuple = ()  # names in PathRecord.extra to include as core features

    def __post_init__(self):
        if self.flow not in ("F", "G"):
            raise InvalidArgumentError(f"flow must be 'F' or 'G', got {self.flow!r}")
        if self.degree < 0:
            raise InvalidArgumentError("degree must be nonnegative")

    def with_flow(self, flow: str) -> "FeatureMap":
        return FeatureMap(flow, self.degree, self.k_summary, self.use_state, self.use_noise, self.extra)

    def block(self, rec: PathRecord, i: int) -> FeatureBlock:
        r, nz = rec.rates, rec.noise
        cols, names = [], []
        if self.use_state and rec.X is not None:
            cols.append(rec.X[:, i])
            names.append("X")
        cols += [r.lambda_B[:, i], r.lambda_H[:, i], r.cum_B[:, i], r.cum_H[:, i]]
        names += ["lamB", "lamH", "LamB", "LamH"]
        if self.use_noise:
            cols.append(nz.B[:, i])
            names.append("B")
            if nz.marks.n_bins:
                cols.append(nz.eta[:, i])
                names.append("eta")
        for name in self.extra:
            cols.append(rec.extra[name][:, i])
            names.append(name)
        core = np.column_stack(cols)
        summ, snames = [], []
        if self.flow == "G":
            summ += [r.cum_B[:, -1], r.cum_H[:, -1]]
            snames += ["LamB_T", "LamH_T"]
            if self.k_summary > 0:
                idx = np.unique(np.linspace(0, r.grid.n_steps, self.k_summary).round().astype(int))
                summ += [r.lambda_B[:, j] for j in idx] + [r.lambda_H[:, j] for j in idx]
                snames += [f"lamB@{j}" for j in idx] + [f"lamH@{j}" for j in idx]
        summary = np.column_stack(summ) if summ else np.zeros((core.shape[0], 0))
        return FeatureBlock(core, summary, names + snames)


def _monomials(k: int, degree: int):
    out = []
    for d in range(1, degree + 1):
        out += list(combinations_with_replacement(range(k), d))
    return out


@dataclass
class Basis:
    """Fitted feature transform: standardise, drop degenerate columns, expand."""

    core_keep: np.ndarray
    core_mean: np.ndarray
    core_scale: np.ndarray
    summ_keep: np.ndarray
    summ_mean: np.ndarray
    summ_scale: np.ndarray
    monomials: list
    notes: list

    @classmethod
    def fit(cls, block: FeatureBlock, degree: int) -> "Basis":
        notes = []

        def stats(a):
            if a.shape[1] == 0:
                return np.zeros(0, bool), np.zeros(0), np.zeros(0)
            mean = a.mean(axis=0)
            sd = a.std(axis=0)
            keep = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
            return keep, mean[keep], sd[keep]

        ck, cm, cs = stats(block.core)
        sk, sm, ss = stats(block.summary)
        kc = block.core.shape[1]
        dropped = [block.names[j] for j in range(kc) if not ck[j]]
        dropped += [block.names[kc + j] for j in range(block.summary.shape[1]) if not sk[j]]
        if dropped:
            notes.append("dropped zero-variance features: " + ", ".join(dropped))
        return cls(ck, cm, cs, sk, sm, ss, _monomials(int(ck.sum()), degree), notes)

    @property
    def dim(self) -> int:
        return 1 + len(self.monomials) + int(self.summ_keep.sum())

    def transform(self, block: FeatureBlock) -> np.ndarray:
        z = (block.core[:, self.core_keep] - self.core_mean) / self.core_scale
        cols = [np.ones(block.n)]
        for mono in self.monomials:
            c = z[:, mono[0]].copy()
            for j in mono[1:]:
                c *= z[:, j]
            cols.append(c)
        if self.summ_keep.any():
            s = (block.summary[:, self.summ_keep] - self.summ_mean) / self.summ_scale
            cols += list(s.T)
        return np.column_stack(cols)


def ridge_solve(A: np.ndarray, y: np.ndarray, ridge: float = RIDGE, free=(0,)):
    """Ridge least squares; returns ``(coef, condition_number)``.

    The penalty is ``ridge * trace(A'A) / dim`` on every column not in
    ``free``. The damped problem is solved as an augmented least-squares
    system (SVD) rather than through the normal equations, which keeps the
    accuracy at the level of ``cond(A)`` instead of ``cond(A)^2``. The
    reported condition number is the one of the damped normal system.
    """
    n, d = A.shape
    pen = np.full(d, ridge * float(np.sum(A * A)) / max(d, 1))
    pen[list(free)] = 0.0
    aug = np.vstack([A, np.diag(np.sqrt(pen))])
    rhs = np.concatenate([y, np.zeros((d,) + y.shape[1:])])
    try:
        coef, _, rank, sv = np.linalg.lstsq(aug, rhs, rcond=None)
    except np.linalg.LinAlgError as exc:
        raise SingularRegressionError(f"least-squares solve failed: {exc}", condition_number=np.inf) from exc
    cond = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else float("inf")
    if not np.isfinite(cond) or cond > MAX_COND or rank < d:
        raise SingularRegressionError(f"regression system ill-conditioned (cond={cond:.3g})", condition_number=cond)
    return coef, cond


def r_squared(y: np.ndarray, fitted: np.ndarray) -> np.ndarray:
    y2 = y.reshape(y.shape[0], -1)
    f2 = fitted.reshape(y2.shape)
    sst = np.sum((y2 - y2.mean(axis=0)) ** 2, axis=0)
    sse = np.sum((y2 - f2) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(sst > 1e-300 * y2.shape[0], 1.0 - sse / sst, 1.0)
    return r2 if y.ndim > 1 else r2[0]


@dataclass
class RegressionFit:
    basis: Basis
    coefficients: np.ndarray
    r2: float | np.ndarray
    condition_number: float
    fitted: np.ndarray

    @property
    def notes(self) -> list:
        return self.basis.notes

    def predict(self, block: FeatureBlock) -> np.ndarray:
        return self.basis.transform(block) @ self.coefficients


def fit_conditional(targets: np.ndarray, block: FeatureBlock, degree: int = 2, ridge: float = RIDGE,
                    check_size: bool = True) -> RegressionFit:
    """Project per-path ``targets`` (``(n,)`` or ``(n, k)``) on the polynomial basis of ``block``."""
    y = np.asarray(targets, dtype=float)
    if y.shape[0] != block.n:
        raise InvalidArgumentError(f"{y.shape[0]} targets for {block.n} feature rows")
    basis = Basis.fit(block, degree)
    if check_size and block.n < 10 * basis.dim:
        raise InvalidArgumentError(f"need at least {10 * basis.dim} paths for a basis of dimension {basis.dim}")
    A = basis.transform(block)
    coef, cond = ridge_solve(A, y, ridge)
    fitted = A @ coef
    return RegressionFit(basis, coef, r_squared(y, fitted), cond, fitted)


def conditional_expectation(targets, rec: PathRecord, i: int, fmap: FeatureMap, **kw) -> np.ndarray:
    """Fitted ``E[targets | flow_{t_i}]`` per path."""
    return fit_conditional(targets, fmap.block(rec, i), fmap.degree, **kw).fitted


@dataclass
class TowerReport:
    distance: float
    relative: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.distance <= self.tolerance


def tower_check(target: np.ndarray, i1: int, i2: int, rec: PathRecord, fmap: FeatureMap) -> TowerReport:
    """Compare ``E[E[Y|t2]|t1]`` with ``E[Y|t1]`` (both fitted) in ensemble L2."""
    if i1 > i2:
        raise InvalidArgumentError("tower check needs t1 <= t2")
    b1 = fmap.block(rec, i1)
    direct = fit_conditional(target, b1, fmap.degree).fitted
    inner = fit_conditional(target, fmap.block(rec, i2), fmap.degree).fitted
    composed = fit_conditional(inner, b1, fmap.degree).fitted
    dist = float(np.sqrt(np.mean((composed - direct) ** 2)))
    scale = float(np.sqrt(np.mean(direct**2)))
    basis_dim = Basis.fit(b1, fmap.degree).dim
    tol = 3.0 * float(np.std(target)) * np.sqrt(basis_dim / target.size) + 1e-12 * max(scale, 1.0)
    return TowerReport(dist, dist / scale if scale > 0 else 0.0, tol)
