"""Hamiltonians under G and F, maximum-principle checks and the gradient identity.

For a state ensemble with adjoint ``(p, q)`` the Hamiltonian at ``t_i`` is

    H0 = F + b(t,t) p + kappa(t,t,0) q(0) lam^B + sum_j kappa(t,t,z_j) q(z_j) lam^H nu_j
    H1 = int_0^t d_t b(t,s) ds p + int_0^t int d_t kappa(t,s,z) D_{s,z} p Lambda(ds dz)

On the grid ``lam`` is the step-averaged rate ``dLambda_i / dt_i`` and ``p`` is
the one-step conditional mean ``E[p_{i+1} | G_i]``; both choices make the
discrete Hamiltonian the exact derivative of the discrete objective.
The F-version replaces ``p`` and ``q lam`` by their F-flow regressions.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bsde import BsdeSolution, BsdeSpec, solve_backward
from .condexp import FeatureMap, PathRecord, fit_conditional
from .errors import InvalidArgumentError, UnsupportedModelError
from .naderiv import NaDerivativeField
from .noise import NoiseEnsemble
from .timechange import RateEnsemble, cell_measures
from .volterra import ControlPolicy, Rates, StateEnsemble, VolterraModel, solve_differential, solve_direct


@dataclass(frozen=True)
class Objective:
    """``J(u) = E[int_0^T F(t, lam, u, x) dt + G(X(T))]`` with the partial derivatives."""

    F: Callable
    G: Callable
    dx_F: Callable
    du_F: Callable
    dx_G: Callable
    name: str = "custom"


def lq_objective() -> Objective:
    """``F = -u^2``, ``G = x``."""
    return Objective(
        F=lambda t, lam, u, x: -(u**2) + 0 * x,
        G=lambda x: x,
        dx_F=lambda t, lam, u, x: 0 * x + 0 * u,
        du_F=lambda t, lam, u, x: -2 * u + 0 * x,
        dx_G=lambda x: 1 + 0 * x,
        name="lq",
    )


def evaluate_objective(objective: Objective, state: StateEnsemble, rates: RateEnsemble) -> np.ndarray:
    """Per-path left-point ``sum F dt + G(X_T)``."""
    g = state.grid
    lam = Rates(rates.lambda_B[:, :-1], rates.lambda_H[:, :-1])
    f = np.broadcast_to(objective.F(g.t[:-1], lam, state.u[:, :-1], state.X[:, :-1]), state.u[:, :-1].shape)
    return np.sum(f * g.dt, axis=1) + objective.G(state.X[:, -1])


def adjoint_spec(model: VolterraModel, objective: Objective, state: StateEnsemble, rec: PathRecord, **kw) -> BsdeSpec:
    """Adjoint BSDE with driver ``d_x H`` for a convolution-free model."""
    if not model.convolution_free:
        raise UnsupportedModelError("the generic adjoint driver needs a convolution-free model")
    dx_b, _, dx_k, _ = model.variation_kernels()
    X, U = state.X, state.u
    z, w = rec.noise.marks.z, rec.noise.marks.weights

    def driver(i, t, lam, p, qb, qh, extra):
        x, u = X[:, i], U[:, i]
        g = objective.dx_F(t, lam, u, x) + dx_b(t, t, lam, u, x) * p
        g = g + dx_k(t, t, 0.0, lam, u, x) * qb * extra["dLB"] / extra["dt"]
        for j in range(z.size):
            g = g + dx_k(t, t, z[j], lam, u, x) * qh[:, j] * w[j] * extra["dLH"] / extra["dt"]
        return g

    return BsdeSpec(objective.dx_G(X[:, -1]), driver, **kw)


@dataclass
class HamiltonianInputs:
    model: VolterraModel
    objective: Objective
    adjoint: BsdeSolution
    state: StateEnsemble
    rec: PathRecord
    na_p: NaDerivativeField | None = None
    experimental: bool = False
    fmap: FeatureMap = field(default_factory=lambda: FeatureMap("F"))
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.state.n_paths != self.rec.n_paths or self.adjoint.p.shape[0] != self.rec.n_paths:
            raise InvalidArgumentError("state, adjoint and path record sizes differ")
        if self.model.convolution_free or self.model.kappa_time_free:
            return
        if self.na_p is None:
            raise UnsupportedModelError("model has d_t kappa != 0; the NA-derivative of p (na_p) is required")
        if not self.experimental:
            raise UnsupportedModelError("NA-derivative term of the Hamiltonian is experimental; set experimental=True")

    @property
    def grid(self):
        return self.state.grid

    def rates_at(self, i):
        r = self.rec.rates
        return Rates(r.lambda_B[:, i], r.lambda_H[:, i])

    def step_rates(self, i):
        """Step-averaged rates ``dLambda_i / dt_i`` (the last grid point reuses the previous step)."""
        j = min(i, self.grid.n_steps - 1)
        r, dt = self.rec.rates, self.grid.dt[j]
        return r.dLambda_B[:, j] / dt, r.dLambda_H[:, j] / dt

    def adjoint_terms(self, i: int, flow: str = "G"):
        """``(p, q(0) lam^B, [q(z_j) lam^H nu_j])`` at ``t_i`` under the given flow."""
        key = (i, flow)
        if key in self._cache:
            return self._cache[key]
        rb, rh = self.step_rates(i)
        w = self.rec.noise.marks.weights
        p = self.adjoint.p_cond[:, i]
        qb = self.adjoint.q_b[:, i] * rb
        qh = self.adjoint.q_h[:, i] * (rh[:, None] * w[None, :])
        if flow == "F":
            block = self.fmap.with_flow("F").block(self.rec.with_state(self.state.X), i)
            tg = np.column_stack([p, qb, qh])
            fit = fit_conditional(tg, block, self.fmap.degree).fitted
            p, qb, qh = fit[:, 0], fit[:, 1], fit[:, 2:]
        elif flow != "G":
            raise InvalidArgumentError(f"flow must be 'F' or 'G', got {flow!r}")
        self._cache[key] = (p, qb, qh)
        return p, qb, qh

    def memory_term(self, i: int, flow: str = "G") -> np.ndarray:
        """H1 at ``t_i``; does not depend on the current control or state."""
        key = ("H1", i, flow)
        if key in self._cache:
            return self._cache[key]
        m = self.model
        n = self.state.n_paths
        if m.convolution_free or i == 0:
            out = np.zeros(n)
        else:
            g = self.grid
            dtb, dtk = m.time_derivatives(float(np.min(g.dt)))
            r = self.rec.rates
            lam = Rates(r.lambda_B[:, :i], r.lambda_H[:, :i])
            U, X = self.state.u[:, :i], self.state.X[:, :i]
            Ab = np.sum(np.broadcast_to(dtb(g.t[i], g.t[:i], lam, U, X), U.shape) * g.dt[:i], axis=1)
            p = self.adjoint_terms(i, flow)[0]
            out = Ab * p
            if not m.kappa_time_free:
                out = out + self._na_term(i, dtk)
        self._cache[key] = out
        return out

    def _na_term(self, i, dtk):
        fld = self.na_p
        part = fld.partition
        lamc = cell_measures(self.rec.rates, self.rec.noise.marks, part)
        g = self.grid
        t = g.t[i]
        out = np.zeros(self.state.n_paths)
        for k, c in enumerate(part.cells):
            if c.i1 > i:
                continue
            zc = 0.0 if c.is_gaussian else self.rec.noise.marks.z[c.mark_set]
            r = self.rec.rates
            lam = Rates(r.lambda_B[:, c.i0], r.lambda_H[:, c.i0])
            kv = dtk(t, g.t[c.i0], zc, lam, self.state.u[:, c.i0], self.state.X[:, c.i0])
            out += np.broadcast_to(kv, out.shape) * fld.values[:, k] * lamc[:, k]
        return out


def _col(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _h0(inp: HamiltonianInputs, i, u, x, terms):
    """H0 with ``u``, ``x`` of shape ``(n, K)``."""
    m, obj = inp.model, inp.objective
    t = inp.grid.t[i]
    lam = inp.rates_at(i)
    lam2 = Rates(lam.b[:, None], lam.h[:, None])
    p, qb, qh = terms
    out = obj.F(t, lam2, u, x) + m.b(t, t, lam2, u, x) * p[:, None] + m.kappa(t, t, 0.0, lam2, u, x) * qb[:, None]
    z = inp.rec.noise.marks.z
    for j in range(z.size):
        out = out + m.kappa(t, t, z[j], lam2, u, x) * qh[:, j : j + 1]
    return np.broadcast_to(out, np.broadcast_shapes(u.shape, x.shape))


def hamiltonian_G(i: int, inputs: HamiltonianInputs, u=None, x=None) -> np.ndarray:
    """Per-path ``H(t_i)``; ``u``/``x`` default to the state ensemble's values and may be ``(n, K)``."""
    return _hamiltonian(i, inputs, u, x, "G")


def hamiltonian_F(i: int, inputs: HamiltonianInputs, u=None, x=None) -> np.ndarray:
    """Per-path ``H^F(t_i)`` with F-flow regressions of the adjoint terms."""
    return _hamiltonian(i, inputs, u, x, "F")


def _hamiltonian(i, inputs, u, x, flow):
    u0 = inputs.state.u[:, i] if u is None else u
    x0 = inputs.state.X[:, i] if x is None else x
    squeeze = np.ndim(u0) <= 1 and np.ndim(x0) <= 1
    n = inputs.state.n_paths
    uu = _col(np.broadcast_to(u0, (n,)) if np.ndim(u0) == 0 else u0)
    xx = _col(np.broadcast_to(x0, (n,)) if np.ndim(x0) == 0 else x0)
    terms = inputs.adjoint_terms(i, flow)
    out = _h0(inputs, i, uu, xx, terms) + inputs.memory_term(i, flow)[:, None]
    return out[:, 0] if squeeze else out


def du_hamiltonian(i: int, inputs: HamiltonianInputs, u=None, flow: str = "F", h: float | None = None) -> np.ndarray:
    """``d_u H`` at ``t_i``: analytic kernels when available, else central differences with step ``h``."""
    m, obj = inputs.model, inputs.objective
    u = inputs.state.u[:, i] if u is None else np.broadcast_to(u, (inputs.state.n_paths,))
    x = inputs.state.X[:, i]
    if m.du_b is None or m.du_kappa is None:
        h = h or 1e-4
        return (_hamiltonian(i, inputs, u + h, x, flow) - _hamiltonian(i, inputs, u - h, x, flow)) / (2 * h)
    t = inputs.grid.t[i]
    lam = inputs.rates_at(i)
    p, qb, qh = inputs.adjoint_terms(i, flow)
    out = obj.du_F(t, lam, u, x) + m.du_b(t, t, lam, u, x) * p + m.du_kappa(t, t, 0.0, lam, u, x) * qb
    z = inputs.rec.noise.marks.z
    for j in range(z.size):
        out = out + m.du_kappa(t, t, z[j], lam, u, x) * qh[:, j]
    return np.broadcast_to(out, u.shape)


@dataclass
class MpReport:
    flow: str
    t: np.ndarray  # checked times
    u_grid: np.ndarray
    gap: np.ndarray  # (n_t, n_paths) max_u H - H(u_hat)
    argmax: np.ndarray  # (n_t, n_paths)
    du_H: np.ndarray  # (n_t, n_paths) at the candidate
    G_violation: float
    map_violation: float
    tol_max: float
    tol_conc: float

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gap)) if self.gap.size else 0.0

    @property
    def maximality_ok(self) -> bool:
        return self.max_gap <= self.tol_max

    @property
    def concavity_ok(self) -> bool:
        return self.G_violation <= self.tol_conc and self.map_violation <= self.tol_conc

    @property
    def passed(self) -> bool:
        return self.maximality_ok and self.concavity_ok

    def summary(self) -> dict:
        return {
            "flow": self.flow,
            "max_gap": self.max_gap,
            "tol_max": self.tol_max,
            "G_concavity_violation": self.G_violation,
            "map_concavity_violation": self.map_violation,
            "tol_conc": self.tol_conc,
            "max_abs_du_H": float(np.max(np.abs(self.du_H))) if self.du_H.size else 0.0,
            "passed": self.passed,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "max_gap", "mean_gap", "mean_argmax", "mean_du_H", "max_abs_du_H"])
            for k, t in enumerate(self.t):
                w.writerow([repr(float(v)) for v in (
                    t, self.gap[k].max(), self.gap[k].mean(), self.argmax[k].mean(),
                    self.du_H[k].mean(), np.abs(self.du_H[k]).max(),
                )])


def _midpoint_violation(f, probes: np.ndarray) -> float:
    """Largest ``(f(a)+f(b))/2 - f((a+b)/2)`` over probe pairs; ``f`` maps ``(K,)`` or ``(n, K)`` values."""
    probes = np.asarray(probes, dtype=float)
    if probes.shape[-1] < 2:
        return 0.0
    a_idx, b_idx = np.triu_indices(probes.shape[-1], 1)
    a, b = probes[..., a_idx], probes[..., b_idx]
    viol = 0.5 * (f(a) + f(b)) - f(0.5 * (a + b))
    return float(max(np.max(viol), 0.0))


def check_sufficient(
    inputs: HamiltonianInputs,
    candidate=None,
    flow: str = "F",
    u_grid=None,
    x_probe=None,
    times=None,
    paths=None,
    tol_max: float = 1e-6,
    tol_conc: float = 1e-8,
    bounds=None,
) -> MpReport:
    """Maximality gap over a uniform u-grid plus midpoint concavity probes.

    ``candidate`` defaults to the controls stored in the state ensemble.
    ``x_probe`` holds relative state multipliers (default 0.5..1.5) applied to
    each path's state for the concavity of ``x -> max_u H``; ``G`` is probed
    on the same absolute values.
    """
    st = inputs.state
    n, M = st.n_paths, st.grid.n_steps
    cand = st.u if candidate is None else np.broadcast_to(np.asarray(candidate, float), (n, M + 1))
    if u_grid is None:
        lo, hi = bounds if bounds is not None else (0.0, 1.0)
        u_grid = np.linspace(lo, hi, 101)
    u_grid = np.asarray(u_grid, dtype=float)
    times = list(range(M)) if times is None else list(times)
    sel = np.arange(n) if paths is None else np.asarray(paths)
    mult = np.linspace(0.5, 1.5, 5) if x_probe is None else np.asarray(x_probe, dtype=float)
    gaps, args, dus = [], [], []
    map_v = 0.0
    xs = []
    for i in times:
        ug = np.broadcast_to(u_grid, (n, u_grid.size))
        H = _hamiltonian(i, inputs, ug, st.X[:, i], flow)[sel]
        Hc = _hamiltonian(i, inputs, cand[:, i], st.X[:, i], flow)[sel]
        k = np.argmax(H, axis=1)  # first maximiser: smallest u on ties
        gaps.append(H[np.arange(sel.size), k] - Hc)
        args.append(u_grid[k])
        dus.append(du_hamiltonian(i, inputs, cand[:, i], flow)[sel])
        xi = st.X[:, i]
        xs.append(xi[sel])
        a_idx, b_idx = np.triu_indices(mult.size, 1)
        cols = np.concatenate([mult, 0.5 * (mult[a_idx] + mult[b_idx])])
        sup = np.empty((sel.size, cols.size))
        for c, f in enumerate(cols):
            sup[:, c] = _hamiltonian(i, inputs, ug, (f * xi)[:, None], flow)[sel].max(axis=1)
        if a_idx.size:
            viol = 0.5 * (sup[:, a_idx] + sup[:, b_idx]) - sup[:, mult.size :]
            map_v = max(map_v, float(np.max(viol)))
    allx = np.concatenate(xs) if xs else np.zeros(0)
    gp = np.unique(np.quantile(allx, np.linspace(0, 1, 7))) if allx.size else np.zeros(0)
    g_v = _midpoint_violation(inputs.objective.G, gp)
    return MpReport(
        flow,
        st.grid.t[times],
        u_grid,
        np.array(gaps).reshape(len(times), sel.size),
        np.array(args).reshape(len(times), sel.size),
        np.array(dus).reshape(len(times), sel.size),
        g_v,
        max(map_v, 0.0),
        tol_max,
        tol_conc,
    )


def first_variation(model: VolterraModel, state: StateEnsemble, beta, noise: NoiseEnsemble, rates: RateEnsemble) -> StateEnsemble:
    """Linear Volterra equation for ``chi`` solved with the direct grid sum on the same noise.

    Returned ensemble holds ``chi`` as ``X`` and ``beta`` as ``u``.
    """
    dx_b, du_b, dx_k, du_k = model.variation_kernels()
    g = state.grid
    n, M = state.n_paths, g.n_steps
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n, M + 1))
    chi = np.zeros((n, M + 1))
    U, X = state.u, state.X
    z = noise.marks.z
    for m in range(1, M + 1):
        tm, s = g.t[m], g.t[:m]
        lam = Rates(rates.lambda_B[:, :m], rates.lambda_H[:, :m])
        um, xm, cm, bm = U[:, :m], X[:, :m], chi[:, :m], beta[:, :m]
        drift = dx_b(tm, s, lam, um, xm) * cm + du_b(tm, s, lam, um, xm) * bm
        vol = dx_k(tm, s, 0.0, lam, um, xm) * cm + du_k(tm, s, 0.0, lam, um, xm) * bm
        val = np.sum(drift * g.dt[:m], axis=1) + np.sum(vol * noise.dB[:, :m], axis=1)
        for j in range(z.size):
            kj = dx_k(tm, s, z[j], lam, um, xm) * cm + du_k(tm, s, z[j], lam, um, xm) * bm
            val = val + np.sum(kj * noise.H_tilde[:, :m, j], axis=1)
        chi[:, m] = val
    return StateEnsemble(g, chi, np.array(beta))


@dataclass
class GradientReport:
    finite_difference: tuple  # (mean, se)
    variation: tuple
    hamiltonian: tuple
    pair_se: dict  # SE of each pairwise per-path difference

    def agree(self, k: float = 3.0, atol: float = 0.0) -> dict:
        vals = {"finite_difference": self.finite_difference, "variation": self.variation, "hamiltonian": self.hamiltonian}
        out = {}
        for (a, b), se in self.pair_se.items():
            out[(a, b)] = abs(vals[a][0] - vals[b][0]) <= k * se + atol
        return out


def _mse(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0


def perturbation_gradient(
    model: VolterraModel,
    objective: Objective,
    state: StateEnsemble,
    beta,
    noise: NoiseEnsemble,
    rates: RateEnsemble,
    inputs: HamiltonianInputs | None = None,
    eps: float = 1e-4,
    solver: str = "direct",
    flow: str = "F",
) -> GradientReport:
    """Three estimates of ``d/d eps J(u + eps beta)`` at ``eps = 0``.

    The base control is frozen to the per-path values stored in ``state``.
    Central differences reuse the same noise (common random numbers).
    """
    g = state.grid
    n, M = state.n_paths, g.n_steps
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n, M + 1))
    solve = solve_direct if solver == "direct" else (lambda *a: solve_differential(*a).state)
    base = ControlPolicy.deterministic(state.u)
    jp = evaluate_objective(objective, solve(model, ControlPolicy.perturbed(base, beta, eps), noise, rates), rates)
    jm = evaluate_objective(objective, solve(model, ControlPolicy.perturbed(base, beta, -eps), noise, rates), rates)
    fd = (jp - jm) / (2 * eps)
    chi = first_variation(model, state, beta, noise, rates).X
    lam = Rates(rates.lambda_B[:, :-1], rates.lambda_H[:, :-1])
    U, X = state.u[:, :-1], state.X[:, :-1]
    var = np.sum(
        (objective.dx_F(g.t[:-1], lam, U, X) * chi[:, :-1] + objective.du_F(g.t[:-1], lam, U, X) * beta[:, :-1]) * g.dt,
        axis=1,
    ) + objective.dx_G(state.X[:, -1]) * chi[:, -1]
    if inputs is None:
        rec = PathRecord(rates, noise, state.X)
        adj = solve_backward(adjoint_spec(model, objective, state, rec), rec)
        inputs = HamiltonianInputs(model, objective, adj, state, rec)
    ham = np.zeros(n)
    for i in range(M):
        if np.any(beta[:, i] != 0):
            ham += du_hamiltonian(i, inputs, flow=flow) * beta[:, i] * g.dt[i]
    est = {"finite_difference": fd, "variation": var, "hamiltonian": ham}
    pairs = {}
    names = list(est)
    for a in range(3):
        for b in range(a + 1, 3):
            pairs[(names[a], names[b])] = _mse(est[names[a]] - est[names[b]])[1]
    return GradientReport(_mse(fd), _mse(var), _mse(ham), pairs)
