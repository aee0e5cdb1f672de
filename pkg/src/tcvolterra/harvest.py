"""Optimal harvesting with a Volterra growth kernel.

    X(t) = X0 + int_0^t (r(t,s) - K u(s)) X(s) ds + int_0^t sigma(s) X(s) dB(s)
    J(u) = E[int_0^T exp(-delta (T-t)) X(t) u(t) dt]

The adjoint solves the linear BSDE

    p(t) = int_t^T [exp(-delta(T-s)) u(s) + (r~(s) - K u(s)) p(s) + sigma(s) q(s) lam^B_s] ds - int_t^T q dB
    r~(t) = r(t,t) + int_0^t d_t r(t,s) ds

whose solution is ``p(t) = E[(M(T)/M(t)) int_t^T exp(int_t^s (r~ - K u)) e^{-delta(T-s)} u(s) ds | G_t]``
with the Girsanov density ``M`` of ``sigma``. The optimality condition on
the interior of the control range reads ``E[p(t) | F_t] = exp(-delta(T-t)) / K``.

``drop_effort_term=True`` removes the ``-K u p`` term from the driver and the
exponent, which reproduces the adjoint written without it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bsde import BsdeSolution, BsdeSpec, girsanov_density, solve_backward
from .condexp import FeatureMap, PathRecord, fit_conditional
from .control import HamiltonianInputs, Objective, check_sufficient, du_hamiltonian
from .errors import InvalidArgumentError, NumericalBlowupError
from .grid import TimeGrid
from .volterra import BLOWUP, StateEnsemble, VolterraModel

_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


def _as_fn(v) -> Callable:
    if callable(v):
        return v
    c = float(v)
    return lambda t: np.full(np.shape(t), c)


@dataclass(frozen=True)
class HarvestModel:
    """Parameters of the harvesting problem; ``sigma`` may be a number or a callable of ``t``."""

    r: Callable
    dt_r: Callable
    sigma: object = 0.0
    K: float = 1.0
    X0: float = 1.0
    delta: float = 0.1
    u_max: float = 1.0
    drop_effort_term: bool = False
    name: str = "harvest"

    def __post_init__(self):
        if not self.K > 0:
            raise InvalidArgumentError(f"K must be positive, got {self.K}")
        if not self.X0 > 0:
            raise InvalidArgumentError(f"X0 must be positive, got {self.X0}")
        if not self.delta > 0:
            raise InvalidArgumentError(f"delta must be positive, got {self.delta}")
        if not self.u_max > 0:
            raise InvalidArgumentError(f"u_max must be positive, got {self.u_max}")

    @classmethod
    def constant_rate(cls, r0: float, **kw) -> "HarvestModel":
        return cls(r=lambda t, s: r0 + 0 * (t - s), dt_r=lambda t, s: 0 * (t - s), **kw)

    @classmethod
    def exponential_rate(cls, r0: float, c: float, kappa: float, **kw) -> "HarvestModel":
        """``r(t,s) = r0 + c exp(-kappa (t-s))``."""
        return cls(
            r=lambda t, s: r0 + c * np.exp(-kappa * (t - s)),
            dt_r=lambda t, s: -kappa * c * np.exp(-kappa * (t - s)),
            **kw,
        )

    def sigma_on(self, t) -> np.ndarray:
        s = np.asarray(_as_fn(self.sigma)(np.asarray(t, dtype=float)), dtype=float)
        if np.any(s <= -1):
            raise InvalidArgumentError("sigma must stay above -1")
        return s

    def discount(self, grid: TimeGrid) -> np.ndarray:
        return np.exp(-self.delta * (grid.T - grid.t))

    def target(self, grid: TimeGrid) -> np.ndarray:
        """``exp(-delta (T-t)) / K``."""
        return self.discount(grid) / self.K

    def as_volterra(self) -> VolterraModel:
        r, dtr, K = self.r, self.dt_r, self.K
        sig = self.sigma_on

        def kappa(t, s, z, lam, u, x):
            return np.where(np.asarray(z) == 0, sig(s) * x, 0.0)

        return VolterraModel(
            b=lambda t, s, lam, u, x: (r(t, s) - K * u) * x,
            kappa=kappa,
            X0=self.X0,
            dt_b=lambda t, s, lam, u, x: dtr(t, s) * x,
            dt_kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
            dx_b=lambda t, s, lam, u, x: r(t, s) - K * u + 0 * x,
            du_b=lambda t, s, lam, u, x: -K * x + 0 * u,
            dx_kappa=lambda t, s, z, lam, u, x: np.where(np.asarray(z) == 0, sig(s), 0.0) + 0 * x,
            du_kappa=lambda t, s, z, lam, u, x: 0 * x + 0 * np.asarray(z),
            kappa_time_free=True,
            name=self.name,
        )

    def objective(self, T: float) -> Objective:
        d = self.delta
        return Objective(
            F=lambda t, lam, u, x: np.exp(-d * (T - t)) * u * x,
            G=lambda x: 0 * x,
            dx_F=lambda t, lam, u, x: np.exp(-d * (T - t)) * u + 0 * x,
            du_F=lambda t, lam, u, x: np.exp(-d * (T - t)) * x + 0 * u,
            dx_G=lambda x: 0 * x,
            name="harvest",
        )


def tilde_r(t, model: HarvestModel) -> np.ndarray:
    """``r(t,t) + int_0^t d_t r(t,s) ds`` by 32-point Gauss-Legendre quadrature."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    s = 0.5 * t[:, None] * (_GL_X[None, :] + 1.0)
    integral = 0.5 * t * np.sum(_GL_W[None, :] * model.dt_r(t[:, None], s), axis=1)
    return model.r(t, t) + integral


def _control_array(u, n: int, M: int) -> np.ndarray:
    a = np.asarray(u, dtype=float)
    if a.ndim == 0:
        a = np.full(M + 1, float(a))
    return np.broadcast_to(a, (n, M + 1))


def simulate(model: HarvestModel, u, rec: PathRecord) -> StateEnsemble:
    """Log-Euler scheme of the differential form; positivity is exact.

    ``X_{i+1} = X_i exp((r(t_i,t_i) - K u_i + A_i / X_i) dt - sigma_i^2 dLam_i / 2 + sigma_i dB_i)``
    with the memory term ``A_i = sum_{k<i} d_t r(t_i, t_k) X_k dt_k``.
    """
    g = rec.grid
    n, M = rec.n_paths, g.n_steps
    U = np.clip(_control_array(u, n, M), 0.0, model.u_max)
    sig = model.sigma_on(g.t)
    t = g.t
    W = np.tril(model.dt_r(t[:, None], t[None, :]) * np.append(g.dt, 0.0)[None, :], -1)
    memory = bool(np.any(W != 0))
    rdiag = model.r(t, t)
    X = np.empty((n, M + 1))
    X[:, 0] = model.X0
    dB, dL = rec.noise.dB, rec.noise.dLambda_B
    for i in range(M):
        xi = X[:, i]
        drift = rdiag[i] - model.K * U[:, i]
        if memory and i > 0:
            drift = drift + (X[:, :i] @ W[i, :i]) / xi
        X[:, i + 1] = xi * np.exp(drift * g.dt[i] - 0.5 * sig[i] ** 2 * dL[:, i] + sig[i] * dB[:, i])
        bad = ~np.isfinite(X[:, i + 1]) | (X[:, i + 1] > BLOWUP)
        if np.any(bad):
            p = int(np.argmax(bad))
            raise NumericalBlowupError(f"harvest state overflow at path {p}, grid index {i + 1}", index=(p, i + 1))
    return StateEnsemble(g, X, np.array(U))


def stopping_index(state: StateEnsemble) -> np.ndarray:
    """First grid index with ``X <= 0`` (the grid size ``M`` if none), per path."""
    nonpos = state.X <= 0
    return np.where(nonpos.any(axis=1), np.argmax(nonpos, axis=1), state.grid.n_steps)


def evaluate_J(model: HarvestModel, state: StateEnsemble) -> tuple[float, float]:
    """Ensemble mean and standard error of ``sum_i exp(-delta(T-t_i)) X_i u_i dt_i``."""
    g = state.grid
    per = np.sum(model.discount(g)[:-1] * state.X[:, :-1] * state.u[:, :-1] * g.dt, axis=1)
    se = float(np.std(per, ddof=1) / np.sqrt(per.size)) if per.size > 1 else 0.0
    return float(per.mean()), se


@dataclass
class AdjointEstimate:
    pathwise: np.ndarray  # (n, M+1) (M(T)/M(t)) int_t^T ...
    conditional: np.ndarray  # (n, M+1) F-flow regression of the pathwise values
    density: np.ndarray  # (n, M+1) Girsanov density


def _exponent_rate(model: HarvestModel, grid: TimeGrid, U: np.ndarray) -> np.ndarray:
    a = tilde_r(grid.t, model)[None, :]
    return a if model.drop_effort_term else a - model.K * U


def adjoint_formula(model: HarvestModel, u, rec: PathRecord, state: StateEnsemble | None = None,
                    fmap: FeatureMap | None = None, project: str = "regression") -> AdjointEstimate:
    """Closed-form conditional adjoint.

    The inner integral is the backward recursion ``S_i = e_i u_i dt_i + exp(a_i dt_i) S_{i+1}``
    (left-point quadrature); the outer conditional expectation is an F-flow
    regression (``project='regression'``) or the ensemble mean
    (``project='mean'``, exact when the control and kernel are deterministic).
    """
    g = rec.grid
    n, M = rec.n_paths, g.n_steps
    U = np.clip(_control_array(u, n, M), 0.0, model.u_max)
    a = np.broadcast_to(_exponent_rate(model, g, U), (n, M + 1))
    e = model.discount(g)
    S = np.zeros((n, M + 1))
    for i in range(M - 1, -1, -1):
        S[:, i] = e[i] * U[:, i] * g.dt[i] + np.exp(a[:, i] * g.dt[i]) * S[:, i + 1]
    dens = girsanov_density(model.sigma_on(g.t), rec.noise)
    Y = S * (dens[:, -1:] / dens)
    if project == "mean":
        cond = np.broadcast_to(Y.mean(axis=0), Y.shape).copy()
    else:
        cond = _f_project(Y, rec, state, fmap)
    return AdjointEstimate(Y, cond, dens)


def _f_project(Y: np.ndarray, rec: PathRecord, state: StateEnsemble | None, fmap: FeatureMap | None) -> np.ndarray:
    fmap = (fmap or FeatureMap("F")).with_flow("F")
    r = rec if state is None else rec.with_state(state.X)
    out = np.empty_like(Y)
    for i in range(Y.shape[1]):
        out[:, i] = fit_conditional(Y[:, i], fmap.block(r, i), fmap.degree).fitted
    return out


def adjoint_spec(model: HarvestModel, state: StateEnsemble, **kw) -> BsdeSpec:
    g = state.grid
    e = model.discount(g)
    rt = tilde_r(g.t, model)
    sig = model.sigma_on(g.t)
    U = state.u
    K = 0.0 if model.drop_effort_term else model.K

    def driver(i, t, lam, p, qb, qh, extra):
        return e[i] * U[:, i] + (rt[i] - K * U[:, i]) * p + sig[i] * qb * extra["dLB"] / extra["dt"]

    return BsdeSpec(np.zeros(state.n_paths), driver, **kw)


def adjoint_bsde(model: HarvestModel, state: StateEnsemble, rec: PathRecord, fmap: FeatureMap | None = None,
                 **kw) -> tuple[BsdeSolution, np.ndarray]:
    """Backward-solver route: the G-adjoint and its F-flow projection ``(n, M+1)``."""
    r = rec.with_state(state.X)
    sol = solve_backward(adjoint_spec(model, state, **kw), r, (fmap or FeatureMap("G")).with_flow("G"))
    return sol, _f_project(sol.p, rec, state, fmap)


def relative_discrepancy(a: np.ndarray, b: np.ndarray) -> float:
    """Ensemble L2 relative gap over all grid times."""
    den = np.sqrt(np.mean(b**2))
    return float(np.sqrt(np.mean((a - b) ** 2)) / den) if den > 0 else float(np.sqrt(np.mean(a**2)))


@dataclass
class HarvestSolution:
    t: np.ndarray
    u_hat: np.ndarray
    cond_p: np.ndarray  # ensemble mean of E[p(t)|F_t] (formula route, regression)
    cond_p_bsde: np.ndarray | None
    target: np.ndarray
    residual: np.ndarray  # per t, ensemble RMS of E[p(t)|F_t] - target
    tau: np.ndarray
    J: tuple
    converged: bool
    iterations: int
    history: list = field(default_factory=list)  # (iteration, J, max control change)
    stationarity: float = 0.0  # sup over t of |BR(u) - u| at the returned iterate
    notes: list = field(default_factory=list)

    @property
    def sup_residual(self) -> float:
        return float(np.max(self.residual))

    @property
    def relative_residual(self) -> float:
        return self.sup_residual / float(np.max(np.abs(self.target)))

    @property
    def interior(self) -> np.ndarray:
        tol = 1e-9
        return (self.u_hat > tol) & (self.u_hat < self.u_hat.max(initial=0) - tol) if self.u_hat.size else self.u_hat

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "u_hat", "target", "cond_p", "cond_p_bsde", "residual"])
            for i, t in enumerate(self.t):
                pb = self.cond_p_bsde[i] if self.cond_p_bsde is not None else float("nan")
                w.writerow([repr(float(v)) for v in (t, self.u_hat[i], self.target[i], self.cond_p[i], pb, self.residual[i])])


def _best_response(model, grid, X, cond_p):
    """``u_max`` where ``E[X (e - K E[p|F])] > 0`` at each grid time, else 0 (ties to 0)."""
    coef = np.mean(X * (model.discount(grid)[None, :] - model.K * cond_p), axis=0)
    return np.where(coef > 0, model.u_max, 0.0), coef


def solve_candidate(
    model: HarvestModel,
    rec: PathRecord,
    u0=None,
    damping: float = 0.5,
    max_iter: int = 50,
    tol: float = 1e-10,
    fmap: FeatureMap | None = None,
    with_bsde: bool = False,
) -> HarvestSolution:
    """Damped fixed-point search for a deterministic control curve.

    Each step moves ``u`` halfway toward the best response to the current
    adjoint, i.e. toward ``u_max`` where ``E[p|F_t]`` lies below the target
    ``exp(-delta(T-t))/K`` and toward 0 where it lies above. The loop stops
    when the best response reproduces the iterate (control stationarity);
    the final control is that best response. Inside the loop ``E[p|F_t]``
    uses the ensemble mean (exact for deterministic controls); the
    returned profile uses the F-flow regression. After the first discrete
    zero of ``X`` the control is frozen.
    """
    g = rec.grid
    M = g.n_steps
    u = np.full(M + 1, 0.5 * model.u_max) if u0 is None else np.asarray(u0, dtype=float).copy()
    history = []
    best = (-np.inf, u.copy())
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        st = simulate(model, u, rec)
        J = evaluate_J(model, st)
        if J[0] > best[0]:
            best = (J[0], u.copy())
        cp = adjoint_formula(model, u, rec, st, project="mean").conditional
        br, _ = _best_response(model, g, st.X, cp)
        change = float(np.max(np.abs(br - u)))
        history.append((it, J[0], change))
        if change <= tol:
            converged = True
            break
        u = u + damping * (br - u)
        # snap once the sign pattern has settled
        st2 = simulate(model, br, rec)
        cp2 = adjoint_formula(model, br, rec, st2, project="mean").conditional
        if np.array_equal(_best_response(model, g, st2.X, cp2)[0], br):
            u = br
    if not converged:
        u = best[1]
    st = simulate(model, u, rec)
    tau = stopping_index(st)
    if np.any(tau < M):
        U = np.array(st.u)
        for pth in np.nonzero(tau < M)[0]:
            U[pth, tau[pth]:] = U[pth, tau[pth]]
        st = StateEnsemble(g, st.X, U)
    est = adjoint_formula(model, u, rec, st, fmap)
    cond = est.conditional
    target = model.target(g)
    resid = np.sqrt(np.mean((cond - target[None, :]) ** 2, axis=0))
    br, _ = _best_response(model, g, st.X, cond)
    sol = HarvestSolution(
        g.t, u, cond.mean(axis=0), None, target, resid, tau, evaluate_J(model, st), converged, it, history,
        float(np.max(np.abs(br - u))),
    )
    sol.notes.append("control built by damped best-response iteration (construction, not part of the optimality theory)")
    if with_bsde:
        _, cb = adjoint_bsde(model, st, rec, fmap)
        sol.cond_p_bsde = cb.mean(axis=0)
    return sol


def hamiltonian_inputs(model: HarvestModel, state: StateEnsemble, rec: PathRecord, adjoint: BsdeSolution | None = None,
                       fmap: FeatureMap | None = None) -> HamiltonianInputs:
    r = rec.with_state(state.X)
    if adjoint is None:
        adjoint = solve_backward(adjoint_spec(model, state), r)
    return HamiltonianInputs(model.as_volterra(), model.objective(state.grid.T), adjoint, state, r,
                             fmap=(fmap or FeatureMap("F")).with_flow("F"))


@dataclass
class OptimalityReport:
    relative_residual: float
    interior_points: int
    du_H_max_z: float  # max over interior t of |mean d_u H^F| / SE
    J_hat: tuple
    scan: list  # (u0, J, SE)
    scan_ok: bool
    mp_summary: dict

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u0", "J", "se", "J_hat_minus_J", "ok"])
            for u0, J, se in self.scan:
                d = self.J_hat[0] - J
                w.writerow([repr(float(u0)), repr(J), repr(se), repr(d), str(d >= -3 * max(se, self.J_hat[1]))])


def optimality_report(model: HarvestModel, sol: HarvestSolution, rec: PathRecord, n_scan: int = 21,
                      mp_paths: int = 200, mp_times=None) -> OptimalityReport:
    """Residual, stationarity at interior points, constant-control scan and the sufficient-MP check."""
    g = rec.grid
    st = simulate(model, sol.u_hat, rec)
    inp = hamiltonian_inputs(model, st, rec)
    interior = np.nonzero(sol.interior[:-1])[0]
    zmax = 0.0
    for i in interior:
        d = du_hamiltonian(int(i), inp, flow="F")
        se = float(np.std(d, ddof=1) / np.sqrt(d.size))
        zmax = max(zmax, abs(float(d.mean())) / se if se > 0 else (0.0 if d.mean() == 0 else np.inf))
    scan = []
    for u0 in np.linspace(0.0, model.u_max, n_scan):
        scan.append((float(u0), *evaluate_J(model, simulate(model, u0, rec))))
    Jh = sol.J
    ok = all(Jh[0] >= J - 3 * max(se, Jh[1]) for _, J, se in scan)
    paths = np.arange(min(mp_paths, rec.n_paths))
    times = mp_times if mp_times is not None else range(0, g.n_steps, max(1, g.n_steps // 20))
    tol = gap_tolerance(model, st, inp, times, sol.cond_p)
    rep = check_sufficient(inp, sol.u_hat, flow="F", times=times, paths=paths, bounds=(0.0, model.u_max), tol_max=tol)
    return OptimalityReport(sol.relative_residual, int(interior.size), zmax, Jh, scan, ok, rep.summary())


def gap_tolerance(model: HarvestModel, st: StateEnsemble, inp: HamiltonianInputs, times, reference=None) -> float:
    """Regression tolerance for the maximality gap of the estimated Hamiltonian.

    ``H^F`` is linear in ``u`` with slope ``X (e - K E[p|F])``; an error ``eps``
    in ``E[p|F]`` can open a gap of at most ``u_max K X |eps|``. ``eps`` is
    bounded by three cross-path standard deviations of the fitted adjoint
    plus, when ``reference`` (the ensemble mean of the closed-form route per
    grid time) is given, the gap between the two adjoint routes. Both vanish
    for an exactly computed deterministic adjoint.
    """
    worst = 0.0
    for i in times:
        p = inp.adjoint_terms(int(i), "F")[0]
        eps = 3 * float(np.std(p))
        if reference is not None:
            eps += abs(float(np.mean(p)) - float(reference[int(i)]))
        worst = max(worst, float(np.max(st.X[:, i])) * eps)
    return model.u_max * model.K * worst + 1e-12
