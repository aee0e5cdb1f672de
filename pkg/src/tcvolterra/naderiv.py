"""Non-anticipating derivative of a random variable with respect to mu.

On a partition level the derivative is the simple field whose value on a
cell ``(s, u] x B`` is ``E[xi mu(cell) / Lambda(cell) | G_s]``. Lambda(cell)
is known at time 0 under G, so the pathwise value (floored) is used as the
denominator and only the numerator is regressed.

Since ``E[mu(cell) | G_s] = 0``, any G_s-measurable ``c`` may be subtracted
from ``xi`` without changing the target. By default ``c`` is the fitted
``E[xi | G_s]``, which removes most of the regression noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .condexp import FeatureMap, PathRecord, fit_conditional
from .errors import InvalidArgumentError, SingularRegressionError
from .grid import PartitionScheme
from .noise import NoiseEnsemble, ito_integral, lambda_integral, mu_of_cells
from .timechange import cell_measures

FLOOR = 1e-12


@dataclass
class NaDerivativeField:
    """Piecewise-constant field, ``values[p, k]`` on cell ``k`` of ``partition`` for path ``p``."""

    partition: PartitionScheme
    values: np.ndarray
    r2: np.ndarray = field(default=None)
    floor_hits: int = 0

    @property
    def level(self) -> int:
        return self.partition.level

    def on_grid(self):
        """Expand to left-point grid arrays ``(n, M)`` (Gaussian) and ``(n, M, J)`` (jumps)."""
        P = self.partition
        n, M, J = self.values.shape[0], P.grid.n_steps, P.marks.n_bins
        fb = np.zeros((n, M))
        fh = np.zeros((n, M, J))
        for k, c in enumerate(P.cells):
            if c.is_gaussian:
                fb[:, c.i0:c.i1] = self.values[:, k : k + 1]
            else:
                fh[:, c.i0:c.i1, c.mark_set] = self.values[:, k : k + 1]
        return fb, fh

    def l2_lambda(self, lam_cells: np.ndarray) -> float:
        """Ensemble ``E[int field^2 dLambda]``."""
        return float(np.mean(np.sum(self.values**2 * lam_cells, axis=1)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "s", "u", "mark_set", "mean", "sd", "r2"])
            for k, c in enumerate(self.partition.cells):
                v = self.values[:, k]
                r2 = float("nan") if self.r2 is None else float(self.r2[k])
                w.writerow([k, repr(c.s), repr(c.u), c.mark_set, repr(float(v.mean())), repr(float(v.std())), repr(r2)])


def estimate_na_derivative(
    xi: np.ndarray,
    partition: PartitionScheme,
    rec: PathRecord,
    fmap: FeatureMap,
    floor: float = FLOOR,
    centre: bool = True,
) -> NaDerivativeField:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (rec.n_paths,):
        raise InvalidArgumentError(f"xi must have one value per path, got shape {xi.shape}")
    if not np.all(np.isfinite(xi)) or not np.isfinite(xi.var()):
        raise InvalidArgumentError("xi has non-finite values")
    if fmap.flow != "G":
        fmap = fmap.with_flow("G")
    mu = mu_of_cells(rec.noise, partition)
    lam = cell_measures(rec.rates, rec.noise.marks, partition)
    small = lam < floor
    values = np.zeros_like(mu)
    r2 = np.full(len(partition), np.nan)
    starts = sorted({c.i0 for c in partition.cells})
    for i0 in starts:
        ks = [k for k, c in enumerate(partition.cells) if c.i0 == i0]
        block = fmap.block(rec, i0)
        try:
            x = xi - fit_conditional(xi, block, fmap.degree).fitted if centre else xi
            targets = np.where(small[:, ks], 0.0, x[:, None] * mu[:, ks] / np.where(small[:, ks], 1.0, lam[:, ks]))
            fit = fit_conditional(targets, block, fmap.degree)
        except SingularRegressionError as exc:
            exc.cell = ks
            raise
        values[:, ks] = np.where(small[:, ks], 0.0, fit.fitted)
        r2[ks] = fit.r2
    return NaDerivativeField(partition, values, r2, int(small.sum()))


def lambda_conditional_mean(xi: np.ndarray, rec: PathRecord, fmap: FeatureMap) -> np.ndarray:
    """Regression estimate of ``E[xi | F^Lambda]`` from the rate-path summary."""
    return fit_conditional(xi, fmap.with_flow("G").block(rec, 0), fmap.degree).fitted


def reconstruct(xi: np.ndarray, fld: NaDerivativeField, rec: PathRecord, fmap: FeatureMap) -> np.ndarray:
    """``E[xi|F^Lambda] + int field dmu`` per path."""
    if fld.values.shape[0] != rec.n_paths:
        raise InvalidArgumentError("field and ensemble sizes differ")
    mu = mu_of_cells(rec.noise, fld.partition)
    return lambda_conditional_mean(xi, rec, fmap) + np.sum(fld.values * mu, axis=1)


def relative_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2) / np.mean(b**2)))


@dataclass
class DualityReport:
    lhs: float  # E[xi int phi dmu]
    rhs: float  # E[int phi D xi dLambda]
    se: float
    lhs_se: float

    @property
    def z(self) -> float:
        d = self.lhs - self.rhs
        if self.se == 0:
            return 0.0 if d == 0 else float("inf")
        return d / self.se

    def passed(self, k: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.lhs - self.rhs) <= k * self.se + atol


def duality_check(xi: np.ndarray, phi_b, phi_h, fld: NaDerivativeField, noise: NoiseEnsemble) -> DualityReport:
    """Both sides of ``E[xi int phi dmu] = E[int phi D xi dLambda]``; ``phi`` given on grid x marks."""
    fb, fh = fld.on_grid()
    left = xi * ito_integral(noise, phi_b, phi_h)
    ph = None if phi_h is None else np.broadcast_to(phi_h, fh.shape) * fh
    right = lambda_integral(noise, np.broadcast_to(phi_b, fb.shape) * fb, ph)
    n = xi.size
    return DualityReport(
        float(left.mean()),
        float(right.mean()),
        float(np.std(left - right, ddof=1) / np.sqrt(n)),
        float(np.std(left, ddof=1) / np.sqrt(n)),
    )


@dataclass
class MartingaleRepresentation:
    t: np.ndarray
    represented: np.ndarray  # E[M_T|F^Lambda] + int_0^t field dmu, (n, M+1)
    direct: np.ndarray  # G-regression of M_T at each t, (n, M+1)
    field: NaDerivativeField

    @property
    def discrepancy(self) -> np.ndarray:
        """Ensemble RMS gap between the two routes at each grid time."""
        return np.sqrt(np.mean((self.represented - self.direct) ** 2, axis=0))


def martingale_representation(
    M_T: np.ndarray, partition: PartitionScheme, rec: PathRecord, fmap: FeatureMap
) -> MartingaleRepresentation:
    fmap = fmap.with_flow("G")
    fld = estimate_na_derivative(M_T, partition, rec, fmap)
    fb, fh = fld.on_grid()
    nz = rec.noise
    inc = fb * nz.dB
    if nz.marks.n_bins:
        inc = inc + np.sum(fh * nz.H_tilde, axis=2)
    rep = np.empty((rec.n_paths, nz.grid.n_steps + 1))
    rep[:, 0] = lambda_conditional_mean(M_T, rec, fmap)
    rep[:, 1:] = rep[:, :1] + np.cumsum(inc, axis=1)
    direct = np.empty_like(rep)
    for i in range(nz.grid.n_steps + 1):
        direct[:, i] = fit_conditional(M_T, fmap.block(rec, i), fmap.degree).fitted
    return MartingaleRepresentation(nz.grid.t, rep, direct, fld)


TARGETS = ("mu_total", "B_T_squared", "gauss_quadratic", "jump_quadratic", "mixed", "Lambda_T")


def target_values(name: str, rec: PathRecord) -> np.ndarray:
    """Named terminal random variables used in representation and duality reports.

    With ``B = B_T``, ``e = eta_T``, ``LB = Lambda^B_T``, ``LH = Lambda^H_T`` and
    ``m2 = sum_j z_j^2 nu_j``:

    - ``mu_total``: ``mu((0,T] x R)``
    - ``B_T_squared``: ``B^2``
    - ``gauss_quadratic``: ``B + 0.2 (B^2 - LB)``
    - ``jump_quadratic``: ``e + 0.5 (e^2 - m2 LH)``
    - ``mixed``: ``LB + B + 0.2 (B^2 - LB) + e``
    - ``Lambda_T``: ``LB``
    """
    nz, r = rec.noise, rec.rates
    B, e = nz.B[:, -1], nz.eta[:, -1]
    LB, LH = r.cum_B[:, -1], r.cum_H[:, -1]
    if name == "mu_total":
        return nz.mu_total()[:, -1]
    if name == "B_T_squared":
        return B**2
    if name == "gauss_quadratic":
        return B + 0.2 * (B**2 - LB)
    if name == "jump_quadratic":
        return e + 0.5 * (e**2 - nz.marks.second_moment * LH)
    if name == "mixed":
        return LB + B + 0.2 * (B**2 - LB) + e
    if name == "Lambda_T":
        return LB.copy()
    raise InvalidArgumentError(f"unknown target {name!r}; choose from {', '.join(TARGETS)}")
