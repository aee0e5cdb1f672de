"""Backward SDE solver under G and the Girsanov tools of the harvesting model.

    p(t) = xi + int_t^T g(s, lam_s, p(s), q(s, .)) ds - int_t^T int q(s, z) mu(ds dz)

Backward induction on the grid. At slice ``i`` the next value ``p_{i+1}`` is
regressed jointly on ``[Phi, Phi * dB_i / sqrt(dLam^B_i), Phi * H~_ij / sqrt(comp_ij)]``
where ``Phi`` is the G-flow basis at ``t_i``. The first block gives
``E[p_{i+1} | G_i]`` and the others give ``q(t_i, .)`` after dividing by the
square-root denominators. Then ``p_i = E[p_{i+1}|G_i] + g(...) dt_i`` with the
driver evaluated at the regression-predicted arguments (``p_mode='smoothed'``)
or regressed from the raw next values (``p_mode='raw'``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .condexp import Basis, FeatureMap, PathRecord, r_squared, ridge_solve
from .errors import InvalidArgumentError, UnsupportedModelError
from .noise import NoiseEnsemble
from .timechange import RateEnsemble
from .volterra import Rates

FLOOR = 1e-12


@dataclass
class BsdeSpec:
    """Terminal values and driver.

    ``terminal`` is an ``(n,)`` array or a callable ``rec -> (n,)``.
    ``driver(i, t, lam, p, q_b, q_h, extra)`` returns ``(n,)``; ``lam`` is a
    :class:`Rates` pair at ``t_i``, ``q_h`` is ``(n, J)``. ``extra`` carries
    ``dt`` (the step length), ``dLB``/``dLH`` (step Lambda increments) and,
    for drivers with an NA-derivative term, ``na_p``.
    """

    terminal: object
    driver: Callable | None = None
    needs_na: bool = False
    convolution_free: bool = True
    experimental_na: bool = False
    na_level: int = 2
    p_mode: str = "smoothed"

    def __post_init__(self):
        if self.p_mode not in ("smoothed", "raw"):
            raise InvalidArgumentError(f"p_mode must be 'smoothed' or 'raw', got {self.p_mode!r}")
        if self.needs_na and not self.convolution_free and not self.experimental_na:
            raise UnsupportedModelError(
                "driver needs the NA-derivative of p for a model with d_t kappa != 0; set experimental_na=True"
            )

    def terminal_values(self, rec: PathRecord) -> np.ndarray:
        xi = self.terminal(rec) if callable(self.terminal) else self.terminal
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (rec.n_paths,):
            raise InvalidArgumentError(f"terminal values have shape {xi.shape}, expected ({rec.n_paths},)")
        if not np.all(np.isfinite(xi)):
            raise InvalidArgumentError("terminal values are not finite")
        return xi


@dataclass
class SliceDiagnostics:
    t: float
    r2: float
    condition_number: float
    floor_hits: int
    q_norm: float  # E[q0^2 dLam^B + sum_j q_j^2 comp_j]
    orthogonality: float  # max_k |A_k' residual| / (|A_k| |y|), normal-equation check


@dataclass
class BsdeSolution:
    t: np.ndarray
    p: np.ndarray  # (n, M+1)
    p_raw: np.ndarray  # (n, M+1) unprojected one-step targets; last column = terminal
    q_b: np.ndarray  # (n, M+1); last column unused (0)
    q_h: np.ndarray  # (n, M+1, J)
    p_cond: np.ndarray = None  # (n, M+1) E[p_{i+1} | G_i]; last column = terminal
    diagnostics: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def floor_hits(self) -> int:
        return int(sum(d.floor_hits for d in self.diagnostics))

    def to_csv(self, path) -> None:
        J = self.q_h.shape[2]
        cols = ["t", "mean_p", "sd_p", "mean_q0"] + [f"mean_q{j + 1}" for j in range(J)]
        cols += ["r2", "condition_number", "floor_hits", "q_norm"]
        diag = {round(d.t, 15): d for d in self.diagnostics}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for i, t in enumerate(self.t):
                row = [t, self.p[:, i].mean(), self.p[:, i].std(), self.q_b[:, i].mean()]
                row += [self.q_h[:, i, j].mean() for j in range(J)]
                d = diag.get(round(float(t), 15))
                row += [d.r2, d.condition_number, d.floor_hits, d.q_norm] if d else [1.0, 1.0, 0, 0.0]
                w.writerow([repr(float(v)) if not isinstance(v, int) else str(v) for v in row])


def _normalised(inc: np.ndarray, var: np.ndarray):
    ok = var >= FLOOR
    root = np.sqrt(np.where(ok, var, 1.0))
    return np.where(ok, inc / root, 0.0), np.where(ok, root, np.inf), int((~ok).sum())


def solve_backward(spec: BsdeSpec, rec: PathRecord, fmap: FeatureMap | None = None) -> BsdeSolution:
    """Backward induction; ``rec`` holds rates, noise and (optionally) the forward state."""
    fmap = (fmap or FeatureMap("G")).with_flow("G")
    nz, rates = rec.noise, rec.rates
    grid = nz.grid
    n, M, J = rec.n_paths, grid.n_steps, nz.marks.n_bins
    p = np.empty((n, M + 1))
    p_raw = np.empty((n, M + 1))
    q_b = np.zeros((n, M + 1))
    q_h = np.zeros((n, M + 1, J))
    p_cond = np.empty((n, M + 1))
    p[:, M] = p_raw[:, M] = p_cond[:, M] = spec.terminal_values(rec)
    sol = BsdeSolution(grid.t, p, p_raw, q_b, q_h, p_cond)
    if spec.needs_na and not spec.convolution_free:
        sol.notes.append(f"NA-derivative term estimated at partition level {spec.na_level} (approximate)")
    for i in range(M - 1, -1, -1):
        t, dt = grid.t[i], grid.dt[i]
        block = fmap.block(rec, i)
        basis = Basis.fit(block, fmap.degree)
        Phi = basis.transform(block)
        d = Phi.shape[1]
        zb, rb, hits = _normalised(nz.dB[:, i], nz.dLambda_B[:, i])
        cols = [Phi, Phi * zb[:, None]]
        rh = np.empty((n, J))
        for j in range(J):
            zj, rh[:, j], h = _normalised(nz.H_tilde[:, i, j], nz.compensator[:, i, j])
            hits += h
            cols.append(Phi * zj[:, None])
        A = np.hstack(cols)
        if n < 10 * A.shape[1]:
            raise InvalidArgumentError(f"need at least {10 * A.shape[1]} paths for a joint basis of size {A.shape[1]}")
        y = p[:, i + 1]
        coef, cond = ridge_solve(A, y, free=(0,))
        fitted = A @ coef
        cond_mean = p_cond[:, i] = Phi @ coef[:d]
        q_b[:, i] = Phi @ coef[d : 2 * d] / rb
        for j in range(J):
            q_h[:, i, j] = Phi @ coef[(2 + j) * d : (3 + j) * d] / rh[:, j]
        lam = Rates(rates.lambda_B[:, i], rates.lambda_H[:, i])
        extra = {"dt": dt, "dLB": nz.dLambda_B[:, i], "dLH": rates.dLambda_H[:, i], "state": rec.X}
        if spec.needs_na:
            extra["na_p"] = None if spec.convolution_free else _na_of_slice(y, i, rec, fmap, spec.na_level)
        if spec.driver is None:
            g_raw = g_s = np.zeros(n)
        elif spec.p_mode == "smoothed":
            g_s = np.broadcast_to(spec.driver(i, t, lam, cond_mean, q_b[:, i], q_h[:, i], extra), (n,))
            g_raw = g_s
        else:
            g_raw = np.broadcast_to(spec.driver(i, t, lam, y, q_b[:, i], q_h[:, i], extra), (n,))
            g_s = Phi @ ridge_solve(Phi, g_raw)[0]
        p[:, i] = cond_mean + g_s * dt
        p_raw[:, i] = y + g_raw * dt
        res = y - fitted
        scale = np.linalg.norm(A, axis=0) * max(np.linalg.norm(y), 1e-300)
        orth = float(np.max(np.abs(A.T @ res) / np.where(scale > 0, scale, 1.0)))
        qn = float(np.mean(q_b[:, i] ** 2 * nz.dLambda_B[:, i] + np.sum(q_h[:, i] ** 2 * nz.compensator[:, i], axis=1)))
        sol.diagnostics.append(SliceDiagnostics(float(t), float(r_squared(y, fitted)), cond, hits, qn, orth))
    sol.diagnostics.reverse()
    return sol


def _na_of_slice(values, i, rec, fmap, level):
    """Experimental: NA-derivative field of ``p_{i+1}`` on cells ending by ``t_i``."""
    from .grid import build_partition
    from .naderiv import estimate_na_derivative

    grid = rec.grid
    lev = min(level, int(np.log2(grid.n_steps)))
    while grid.n_steps % (2**lev):
        lev -= 1
    part = build_partition(grid, rec.noise.marks, lev)
    fld = estimate_na_derivative(values, part, rec, fmap)
    mask = np.array([c.i1 <= i for c in part.cells])
    fld.values[:, ~mask] = 0.0
    return fld


def _sigma_on_grid(sigma, t: np.ndarray) -> np.ndarray:
    if callable(sigma):
        return np.broadcast_to(np.asarray(sigma(t), dtype=float), t.shape).copy()
    s = np.asarray(sigma, dtype=float)
    return np.full(t.shape, float(s)) if s.ndim == 0 else s


def girsanov_density(sigma, noise: NoiseEnsemble, rates: RateEnsemble | None = None) -> np.ndarray:
    """``M(t_m) = exp(sum_{i<m} sigma_i dB_i - 1/2 sum_{i<m} sigma_i^2 dLam^B_i)``, shape ``(n, M+1)``.

    ``sigma`` is a callable of ``t``, a scalar, or grid values. The step
    variance ``dLam^B_i`` is the one used to draw ``dB_i`` so that ``M`` is an
    exact discrete martingale.
    """
    t = noise.grid.t
    s = _sigma_on_grid(sigma, t)
    if s.shape != t.shape or not np.all(np.isfinite(s)):
        raise InvalidArgumentError("sigma must be finite on the grid")
    logm = np.zeros((noise.n_paths, t.size))
    np.cumsum(s[:-1] * noise.dB - 0.5 * s[:-1] ** 2 * noise.dLambda_B, axis=1, out=logm[:, 1:])
    return np.exp(logm)


def drift_adjusted_increments(sigma, noise: NoiseEnsemble, rates: RateEnsemble | None = None) -> np.ndarray:
    """``dB^sigma_i = dB_i - sigma_i dLam^B_i``."""
    s = _sigma_on_grid(sigma, noise.grid.t)
    return noise.dB - s[:-1] * noise.dLambda_B
