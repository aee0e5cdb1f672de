"""Conditional Gaussian measure B, conditional centred Poisson measure H~, and mu = B + H~.

Given the rate paths, Gaussian step increments are drawn with variance
``Delta Lambda^B`` and jump counts per (step, mark bin) are Poisson with
mean ``Delta Lambda^H * nu(bin)``; the compensator used for centring is that
same mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

from .errors import InvalidArgumentError
from .grid import EnsembleHandle, MarkGrid, PartitionScheme, TimeGrid
from .timechange import RateEnsemble, cell_measures


@dataclass(frozen=True)
class NoiseEnsemble:
    """Per-step noise for all paths.

    dB : (n, M) Gaussian increments
    jump_counts : (n, M, J) Poisson counts per mark bin
    compensator : (n, M, J) conditional mean of the counts
    dLambda_B : (n, M) conditional variance of ``dB``
    """

    grid: TimeGrid
    marks: MarkGrid
    dB: np.ndarray
    jump_counts: np.ndarray
    compensator: np.ndarray
    dLambda_B: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.dB.shape[0]

    @property
    def jump_marks(self) -> np.ndarray:
        return self.marks.z

    @cached_property
    def H_tilde(self) -> np.ndarray:
        return self.jump_counts - self.compensator

    @cached_property
    def B(self) -> np.ndarray:
        """``B([0, t_i] x {0})`` on the grid, ``(n, M+1)``."""
        return _cum(self.dB)

    @property
    def eta(self) -> np.ndarray:
        """Compensated jump process ``sum z H~`` on the grid, ``(n, M+1)``."""
        return _cum(self.H_tilde @ self.marks.z) if self.marks.n_bins else np.zeros_like(self.B)

    def mu_total(self) -> np.ndarray:
        """``mu((0, t_i] x R)`` on the grid."""
        return _cum(self.dB + self.H_tilde.sum(axis=2))

    def subset(self, idx) -> "NoiseEnsemble":
        return NoiseEnsemble(
            self.grid, self.marks, self.dB[idx], self.jump_counts[idx], self.compensator[idx], self.dLambda_B[idx]
        )


def _cum(inc: np.ndarray) -> np.ndarray:
    out = np.zeros((inc.shape[0], inc.shape[1] + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def sample_noise(rates: RateEnsemble, marks: MarkGrid, ens: EnsembleHandle) -> NoiseEnsemble:
    if rates.n_paths != ens.n_paths:
        raise InvalidArgumentError(f"{rates.n_paths} rate paths for an ensemble of {ens.n_paths}")
    grid = rates.grid
    m, j = grid.n_steps, marks.n_bins
    dlb = rates.dLambda_B
    dB = np.sqrt(dlb) * ens.normal("noise_B", m)
    comp = rates.dLambda_H[:, :, None] * marks.weights[None, None, :]
    if j:
        counts = ens.draw("noise_H", lambda g, i: g.poisson(comp[i]))
    else:
        counts = np.zeros((ens.n_paths, m, 0), dtype=np.int64)
    return NoiseEnsemble(grid, marks, dB, counts, comp, dlb)


def mu_of_cells(noise: NoiseEnsemble, partition: PartitionScheme) -> np.ndarray:
    """mu(cell) for every path and cell, ``(n_paths, n_cells)``."""
    if partition.grid.n_steps != noise.grid.n_steps or not np.array_equal(partition.grid.t, noise.grid.t):
        raise InvalidArgumentError("partition is not aligned with the noise grid")
    if partition.marks.n_bins != noise.marks.n_bins:
        raise InvalidArgumentError("partition and noise use different mark grids")
    cB = noise.B
    cH = _cum_3d(noise.H_tilde)
    out = np.empty((noise.n_paths, len(partition)))
    for k, c in enumerate(partition.cells):
        if c.is_gaussian:
            out[:, k] = cB[:, c.i1] - cB[:, c.i0]
        else:
            out[:, k] = cH[:, c.i1, c.mark_set] - cH[:, c.i0, c.mark_set]
    return out


def _cum_3d(inc):
    out = np.zeros((inc.shape[0], inc.shape[1] + 1, inc.shape[2]))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def ito_integral(noise: NoiseEnsemble, phi_b, phi_h=None) -> np.ndarray:
    """Per-path ``sum_i phi(t_i, 0) dB_i + sum_ij phi(t_i, z_j) H~_ij``.

    Integrands are left-point (predictable) values, broadcastable to
    ``(n, M)`` and ``(n, M, J)``.
    """
    out = np.sum(np.broadcast_to(phi_b, noise.dB.shape) * noise.dB, axis=1)
    if phi_h is not None and noise.marks.n_bins:
        out = out + np.sum(np.broadcast_to(phi_h, noise.H_tilde.shape) * noise.H_tilde, axis=(1, 2))
    return out


def lambda_integral(noise: NoiseEnsemble, f_b, f_h=None) -> np.ndarray:
    """Per-path ``int f dLambda`` with the same left-point convention."""
    out = np.sum(np.broadcast_to(f_b, noise.dB.shape) * noise.dLambda_B, axis=1)
    if f_h is not None and noise.marks.n_bins:
        out = out + np.sum(np.broadcast_to(f_h, noise.compensator.shape) * noise.compensator, axis=(1, 2))
    return out


def _z(x: np.ndarray) -> float:
    n = x.size
    if n < 2:
        return float("nan")
    sd = x.std(ddof=1)
    if sd == 0:
        return 0.0 if x.mean() == 0 else float("inf") * np.sign(x.mean())
    return float(x.mean() / (sd / np.sqrt(n)))


@dataclass
class MomentReport:
    rows: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    n_paths: int = 0
    insufficient: bool = False
    min_paths: int = 1000

    @property
    def max_abs_z(self) -> float:
        zs = [abs(r["z_mean"]) for r in self.rows] + [abs(r["z_second"]) for r in self.rows]
        zs += [abs(p["z"]) for p in self.pairs]
        zs = [z for z in zs if np.isfinite(z)]
        return max(zs) if zs else float("nan")

    def all_finite(self) -> bool:
        return all(np.isfinite(r["z_mean"]) and np.isfinite(r["z_second"]) for r in self.rows) and all(
            np.isfinite(p["z"]) for p in self.pairs
        )

    def passed(self, threshold: float = 4.0) -> bool:
        return not self.insufficient and self.all_finite() and self.max_abs_z < threshold

    def to_csv(self, path) -> None:
        cols = ["cell", "stratum", "s", "u", "mark_set", "n", "mean", "var", "lambda_mean", "z_mean", "z_second"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in cols])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def check_conditional_moments(
    noise: NoiseEnsemble, rates: RateEnsemble, partition: PartitionScheme, n_strata: int = 4, min_paths: int = 1000
) -> MomentReport:
    """z-scores for E[mu|F^Lambda] = 0, E[mu^2 - Lambda|F^Lambda] = 0 and E[mu mu'] = 0.

    The first two are computed within strata of Lambda(cell) so that a
    conditional (not just unconditional) violation shows up.
    """
    mu = mu_of_cells(noise, partition)
    lam = cell_measures(rates, noise.marks, partition)
    n = mu.shape[0]
    rep = MomentReport(n_paths=n, insufficient=n < min_paths, min_paths=min_paths)
    for k, c in enumerate(partition.cells):
        lk = lam[:, k]
        varies = np.ptp(lk) > 1e-12 * max(abs(lk.mean()), 1e-300)
        if varies and n >= n_strata * 50:
            edges = np.quantile(lk, np.linspace(0, 1, n_strata + 1))
            strata = np.clip(np.searchsorted(edges, lk, side="right") - 1, 0, n_strata - 1)
        else:
            strata = np.zeros(n, dtype=int)
        for s in np.unique(strata):
            sel = strata == s
            m, l = mu[sel, k], lk[sel]
            rep.rows.append(
                dict(
                    cell=k,
                    stratum=int(s),
                    s=c.s,
                    u=c.u,
                    mark_set=c.mark_set,
                    n=int(sel.sum()),
                    mean=float(m.mean()),
                    var=float(m.var(ddof=1)) if m.size > 1 else float("nan"),
                    lambda_mean=float(l.mean()),
                    z_mean=_z(m),
                    z_second=_z(m**2 - l),
                )
            )
    if n >= 2:
        prod_mean = mu.T @ mu / n
        sq = mu**2
        prod_sq = sq.T @ sq / n
        for a, b in combinations(range(len(partition)), 2):
            var = (prod_sq[a, b] - prod_mean[a, b] ** 2) * n / (n - 1)
            z = prod_mean[a, b] / np.sqrt(var / n) if var > 0 else (0.0 if prod_mean[a, b] == 0 else np.inf)
            rep.pairs.append(dict(a=a, b=b, mean=float(prod_mean[a, b]), z=float(z)))
    else:
        for a, b in combinations(range(len(partition)), 2):
            rep.pairs.append(dict(a=a, b=b, mean=float(mu[0, a] * mu[0, b]), z=float("nan")))
    return rep
