"""Forward stochastic Volterra equations driven by mu.

    X(t) = X0 + int_0^t b(t, s, lam_s, u_s, X_{s-}) ds + int_0^t int kappa(t, s, z, lam_s, u_s, X_{s-}) mu(ds dz)

Kernels are plain numpy-broadcasting callables::

    b(t, s, lam, u, x)
    kappa(t, s, z, lam, u, x)      # z == 0 is the Gaussian channel

where ``lam`` is a :class:`Rates` pair of arrays. Three solvers are provided:
the direct grid sum (reference), Picard iteration, and the differential form
obtained from the transformation rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidArgumentError, NumericalBlowupError, UnsupportedModelError
from .grid import TimeGrid
from .noise import NoiseEnsemble
from .timechange import RateEnsemble

BLOWUP = 1e12


class Rates(NamedTuple):
    b: np.ndarray
    h: np.ndarray


def _zero(*args):
    return 0.0


@dataclass(frozen=True)
class VolterraModel:
    b: Callable
    kappa: Callable
    X0: float
    dt_b: Callable | None = None
    dt_kappa: Callable | None = None
    dx_b: Callable | None = None
    du_b: Callable | None = None
    dx_kappa: Callable | None = None
    du_kappa: Callable | None = None
    convolution_free: bool = False
    kappa_time_free: bool = False  # d_t kappa == 0 even if b depends on t
    finite_difference: bool = False
    name: str = "custom"

    def time_derivatives(self, dt: float):
        """``(d_t b, d_t kappa)``; exact zeros for convolution-free models."""
        if self.convolution_free:
            return _zero, _zero
        dt_kappa = _zero if self.kappa_time_free else self.dt_kappa
        if self.dt_b is not None and dt_kappa is not None:
            return self.dt_b, dt_kappa
        if not self.finite_difference:
            raise UnsupportedModelError(
                f"model {self.name!r} has no time-derivative kernels; pass dt_b/dt_kappa or finite_difference=True"
            )
        h = dt / 10.0
        b, k = self.b, self.kappa

        def fd_b(t, s, lam, u, x):
            return (b(t + h, s, lam, u, x) - b(t - h, s, lam, u, x)) / (2 * h)

        def fd_k(t, s, z, lam, u, x):
            return (k(t + h, s, z, lam, u, x) - k(t - h, s, z, lam, u, x)) / (2 * h)

        return self.dt_b or fd_b, dt_kappa or fd_k

    def variation_kernels(self):
        missing = [n for n in ("dx_b", "du_b", "dx_kappa", "du_kappa") if getattr(self, n) is None]
        if missing:
            raise UnsupportedModelError(f"model {self.name!r} lacks {', '.join(missing)}")
        return self.dx_b, self.du_b, self.dx_kappa, self.du_kappa


@dataclass(frozen=True)
class StatePath:
    t: np.ndarray
    X: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class StateEnsemble:
    """Solved states ``X`` and the controls actually applied, both ``(n, M+1)``."""

    grid: TimeGrid
    X: np.ndarray
    u: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i) -> StatePath:
        return StatePath(self.grid.t, self.X[i], self.u[i])

    def rows(self):
        """``(path, t, X, u)`` tuples for CSV export."""
        for p in range(self.n_paths):
            for i, t in enumerate(self.grid.t):
                yield p, t, self.X[p, i], self.u[p, i]


class ControlPolicy:
    """Control values in a closed interval ``bounds``; evaluated on the grid with left-point information.

    ``rule(i, t, x, lam)`` receives the grid index, time, current state
    (``(n,)``) and current rates and returns ``(n,)`` values.
    """

    def __init__(self, kind: str, rule: Callable, bounds=(-np.inf, np.inf), base=None, beta=None, eps=0.0):
        lo, hi = bounds
        if not lo <= hi:
            raise InvalidArgumentError(f"empty control range {bounds}")
        self.kind = kind
        self.rule = rule
        self.bounds = (float(lo), float(hi))
        self.base, self.beta, self.eps = base, beta, eps

    def __call__(self, i: int, t: float, x: np.ndarray, lam: Rates) -> np.ndarray:
        v = np.broadcast_to(np.asarray(self.rule(i, t, x, lam), dtype=float), np.shape(x))
        return np.clip(v, *self.bounds)

    @property
    def state_dependent(self) -> bool:
        return self.kind == "feedback" or (self.kind == "perturbed" and self.base.state_dependent)

    @classmethod
    def constant(cls, c: float, bounds=(-np.inf, np.inf)):
        return cls("constant", lambda i, t, x, lam: c, bounds)

    @classmethod
    def deterministic(cls, values, bounds=(-np.inf, np.inf)):
        """``values``: callable of ``t``, grid array ``(M+1,)``, or per-path array ``(n, M+1)``."""
        if callable(values):
            return cls("deterministic", lambda i, t, x, lam: values(t), bounds)
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 1:
            return cls("deterministic", lambda i, t, x, lam: arr[i], bounds)
        return cls("deterministic", lambda i, t, x, lam: arr[:, i], bounds)

    @classmethod
    def feedback(cls, rule: Callable, bounds=(-np.inf, np.inf)):
        """``rule(t, x, lam)`` using only the current (left-point) state and rates."""
        return cls("feedback", lambda i, t, x, lam: rule(t, x, lam), bounds)

    @classmethod
    def perturbed(cls, base: "ControlPolicy", beta, eps: float):
        beta = np.asarray(beta, dtype=float)

        def rule(i, t, x, lam):
            b = beta[i] if beta.ndim == 1 else beta[:, i]
            return base.rule(i, t, x, lam) + eps * b

        return cls("perturbed", rule, base.bounds, base=base, beta=beta, eps=eps)


def bump(grid: TimeGrid, t0: float, h: float, alpha: float = 1.0) -> np.ndarray:
    """Perturbation ``alpha * 1_[t0, t0+h]`` sampled on the grid."""
    t = grid.t
    tol = 1e-12 * grid.T
    return alpha * ((t >= t0 - tol) & (t <= t0 + h + tol)).astype(float)


def _rates_at(rates: RateEnsemble, sl) -> Rates:
    return Rates(rates.lambda_B[:, sl], rates.lambda_H[:, sl])


def _kernel_sum(kb, kk, tm, m, grid, rates, noise, u, x):
    """``sum_{i<m} kb(tm, t_i) dt_i + kk(tm, t_i, 0) dB_i + sum_j kk(tm, t_i, z_j) H~_ij``."""
    if m == 0:
        return np.zeros(x.shape[0])
    s = grid.t[:m]
    lam = _rates_at(rates, slice(0, m))
    um, xm = u[:, :m], x[:, :m]
    out = np.sum(np.broadcast_to(kb(tm, s, lam, um, xm), um.shape) * grid.dt[:m], axis=1)
    out += np.sum(np.broadcast_to(kk(tm, s, 0.0, lam, um, xm), um.shape) * noise.dB[:, :m], axis=1)
    if noise.marks.n_bins:
        z = noise.marks.z
        lam3 = Rates(lam.b[..., None], lam.h[..., None])
        vals = kk(tm, s[:, None], z[None, :], lam3, um[..., None], xm[..., None])
        out += np.sum(np.broadcast_to(vals, noise.H_tilde[:, :m].shape) * noise.H_tilde[:, :m], axis=(1, 2))
    return out


def _guard(xm, m):
    bad = ~np.isfinite(xm) | (np.abs(xm) > BLOWUP)
    if np.any(bad):
        p = int(np.argmax(bad))
        raise NumericalBlowupError(f"state left the finite range at path {p}, grid index {m}", index=(p, m))


def _check_inputs(noise, rates):
    if noise.n_paths != rates.n_paths or noise.grid.n_steps != rates.grid.n_steps:
        raise InvalidArgumentError("noise and rate ensembles do not match")


def solve_direct(model: VolterraModel, policy: ControlPolicy, noise: NoiseEnsemble, rates: RateEnsemble) -> StateEnsemble:
    """Reference solver: the full kernel row is re-evaluated for every output time (O(M^2) per path)."""
    _check_inputs(noise, rates)
    grid = noise.grid
    n, M = noise.n_paths, grid.n_steps
    X = np.empty((n, M + 1))
    u = np.empty((n, M + 1))
    X[:, 0] = model.X0
    for m in range(1, M + 1):
        i = m - 1
        u[:, i] = policy(i, grid.t[i], X[:, i], _rates_at(rates, i))
        X[:, m] = model.X0 + _kernel_sum(model.b, model.kappa, grid.t[m], m, grid, rates, noise, u, X)
        _guard(X[:, m], m)
    u[:, M] = policy(M, grid.t[M], X[:, M], _rates_at(rates, M))
    return StateEnsemble(grid, X, u)


@dataclass
class PicardResult:
    state: StateEnsemble
    diffs: list = field(default_factory=list)  # ensemble L2 of sup-grid |X^{k+1} - X^k|
    sup_diffs: list = field(default_factory=list)
    converged: bool = False
    converged_at: int | None = None  # first k whose iterate is reproduced within tol
    iterates: list = field(default_factory=list)


def solve_picard(
    model: VolterraModel,
    policy: ControlPolicy,
    noise: NoiseEnsemble,
    rates: RateEnsemble,
    n_iter: int = 50,
    tol: float = 1e-12,
    keep_iterates: bool = False,
) -> PicardResult:
    """Picard iteration starting from ``X^0 = X0``; the k-th iterate uses ``X^{k-1}`` on the right side."""
    _check_inputs(noise, rates)
    grid = noise.grid
    n, M = noise.n_paths, grid.n_steps
    prev = np.full((n, M + 1), float(model.X0))
    res = PicardResult(state=None)
    if keep_iterates:
        res.iterates.append(prev.copy())
    for k in range(1, n_iter + 1):
        u = np.empty((n, M + 1))
        for i in range(M + 1):
            u[:, i] = policy(i, grid.t[i], prev[:, i], _rates_at(rates, i))
        cur = np.empty_like(prev)
        cur[:, 0] = model.X0
        for m in range(1, M + 1):
            cur[:, m] = model.X0 + _kernel_sum(model.b, model.kappa, grid.t[m], m, grid, rates, noise, u, prev)
            _guard(cur[:, m], m)
        d = np.max(np.abs(cur - prev), axis=1)
        res.diffs.append(float(np.sqrt(np.mean(d**2))))
        res.sup_diffs.append(float(d.max()))
        if keep_iterates:
            res.iterates.append(cur.copy())
        res.state = StateEnsemble(grid, cur, u)
        if res.sup_diffs[-1] <= tol:
            res.converged = True
            res.converged_at = k - 1
            break
        prev = cur
    else:
        warnings.warn(f"Picard iteration did not reach tol={tol} in {n_iter} iterations", RuntimeWarning)
    return res


@dataclass
class DifferentialResult:
    state: StateEnsemble
    A_b: np.ndarray  # int_0^t d_t b ds on the grid
    A_kappa: np.ndarray  # int_0^t int d_t kappa dmu on the grid


def solve_differential(
    model: VolterraModel, policy: ControlPolicy, noise: NoiseEnsemble, rates: RateEnsemble
) -> DifferentialResult:
    """Forward sweep of the differential (transformation-rule) form.

    ``dX = (b(t,t,..) + A_b(t) + A_kappa(t)) dt + int kappa(t,t,z,..) mu(dt dz)``
    with the accumulators re-evaluated exactly at every step.
    """
    _check_inputs(noise, rates)
    grid = noise.grid
    n, M = noise.n_paths, grid.n_steps
    dtb, dtk = model.time_derivatives(float(np.min(grid.dt)))
    X = np.empty((n, M + 1))
    u = np.empty((n, M + 1))
    Ab = np.zeros((n, M + 1))
    Ak = np.zeros((n, M + 1))
    X[:, 0] = model.X0
    z = noise.marks.z
    for m in range(M):
        tm = grid.t[m]
        lam = _rates_at(rates, m)
        u[:, m] = policy(m, tm, X[:, m], lam)
        if not model.convolution_free and m > 0:
            s = grid.t[:m]
            lams = _rates_at(rates, slice(0, m))
            um, xm = u[:, :m], X[:, :m]
            Ab[:, m] = np.sum(np.broadcast_to(dtb(tm, s, lams, um, xm), um.shape) * grid.dt[:m], axis=1)
            if not model.kappa_time_free:
                Ak[:, m] = _kernel_sum(_zero, dtk, tm, m, grid, rates, noise, u, X)
        xm, um = X[:, m], u[:, m]
        drift = np.broadcast_to(model.b(tm, tm, lam, um, xm), (n,)) + Ab[:, m] + Ak[:, m]
        step = drift * grid.dt[m] + np.broadcast_to(model.kappa(tm, tm, 0.0, lam, um, xm), (n,)) * noise.dB[:, m]
        if noise.marks.n_bins:
            lam2 = Rates(lam.b[:, None], lam.h[:, None])
            kz = model.kappa(tm, tm, z[None, :], lam2, um[:, None], xm[:, None])
            step = step + np.sum(np.broadcast_to(kz, (n, z.size)) * noise.H_tilde[:, m], axis=1)
        X[:, m + 1] = xm + step
        _guard(X[:, m + 1], m + 1)
    u[:, M] = policy(M, grid.t[M], X[:, M], _rates_at(rates, M))
    if not model.convolution_free and M > 0:
        s = grid.t[:M]
        lams = _rates_at(rates, slice(0, M))
        Ab[:, M] = np.sum(np.broadcast_to(dtb(grid.t[M], s, lams, u[:, :M], X[:, :M]), (n, M)) * grid.dt, axis=1)
        if not model.kappa_time_free:
            Ak[:, M] = _kernel_sum(_zero, dtk, grid.t[M], M, grid, rates, noise, u, X)
    return DifferentialResult(StateEnsemble(grid, X, u), Ab, Ak)


# ---------------------------------------------------------------------------
# suite models


def linear_model(r=0.2, sigma=0.2, X0=1.0) -> VolterraModel:
    """``b = r x``, ``kappa = sigma x`` on the Gaussian channel; convolution-free."""
    return VolterraModel(
        b=lambda t, s, lam, u, x: r * x,
        kappa=lambda t, s, z, lam, u, x: np.where(np.asarray(z) == 0, sigma * x, 0.0),
        X0=X0,
        dx_b=lambda t, s, lam, u, x: r + 0 * x,
        du_b=lambda t, s, lam, u, x: 0 * x,
        dx_kappa=lambda t, s, z, lam, u, x: np.where(np.asarray(z) == 0, sigma, 0.0) + 0 * x,
        du_kappa=lambda t, s, z, lam, u, x: 0 * x,
        convolution_free=True,
        name="linear",
    )


def additive_model(X0=0.0, drift=0.0, vol=1.0) -> VolterraModel:
    """Coefficients independent of the state: ``b = drift``, ``kappa = vol`` on every channel."""
    return VolterraModel(
        b=lambda t, s, lam, u, x: drift + 0 * x,
        kappa=lambda t, s, z, lam, u, x: vol + 0 * x + 0 * np.asarray(z),
        X0=X0,
        dx_b=lambda t, s, lam, u, x: 0 * x,
        du_b=lambda t, s, lam, u, x: 0 * x,
        dx_kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
        du_kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
        convolution_free=True,
        name="additive",
    )


def exponential_kernel_model(X0=1.0, rate=1.0, sigma=0.0) -> VolterraModel:
    """``b(t,s,x) = exp(-rate (t-s)) x`` with optional ``kappa = sigma exp(-rate (t-s)) x``."""

    def b(t, s, lam, u, x):
        return np.exp(-rate * (t - s)) * x

    def k(t, s, z, lam, u, x):
        return np.where(np.asarray(z) == 0, sigma * np.exp(-rate * (t - s)) * x, 0.0)

    return VolterraModel(
        b=b,
        kappa=k,
        X0=X0,
        dt_b=lambda t, s, lam, u, x: -rate * b(t, s, lam, u, x),
        dt_kappa=lambda t, s, z, lam, u, x: -rate * k(t, s, z, lam, u, x),
        dx_b=lambda t, s, lam, u, x: np.exp(-rate * (t - s)) + 0 * x,
        du_b=lambda t, s, lam, u, x: 0 * x,
        dx_kappa=lambda t, s, z, lam, u, x: np.where(np.asarray(z) == 0, sigma * np.exp(-rate * (t - s)), 0.0) + 0 * x,
        du_kappa=lambda t, s, z, lam, u, x: 0 * x,
        name="exponential",
    )


def lq_model(X0=0.0) -> VolterraModel:
    """Control enters the drift directly: ``b = u``, no noise."""
    return VolterraModel(
        b=lambda t, s, lam, u, x: u + 0 * x,
        kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
        X0=X0,
        dx_b=lambda t, s, lam, u, x: 0 * x,
        du_b=lambda t, s, lam, u, x: 1 + 0 * x,
        dx_kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
        du_kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
        convolution_free=True,
        name="lq",
    )


SUITE = {
    "linear": linear_model,
    "additive": additive_model,
    "exponential": exponential_kernel_model,
    "lq": lq_model,
}
