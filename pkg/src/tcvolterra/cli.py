"""Command-line entry point: ``tcvolterra <subcommand> --config run.yaml --out dir``.

Every run writes its CSVs, a ``resolved_config.yaml`` (config after the
``--seed``/``--paths`` overrides) and a ``manifest.json`` into the output
directory. Exit codes: 0 success, 2 config error, 3 numerical failure,
4 a check verdict was negative.
"""

from __future__ import annotations

import argparse
import sys
import traceback
import warnings
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from . import config as C
from .errors import InvalidArgumentError, NumericalBlowupError, SingularRegressionError, UnsupportedModelError
from .report import columns_csv, write_csv, write_manifest

OK, CONFIG_ERROR, NUMERICAL_FAILURE, CHECK_FAILED = 0, 2, 3, 4
COMMANDS = ("simulate", "forward", "naderiv", "bsde", "check-mp", "harvest")


class Run:
    """Output directory, collected artifacts and the run summary."""

    def __init__(self, command: str, cfg: C.ExperimentConfig, out: Path, quiet: bool):
        self.command, self.cfg, self.out, self.quiet = command, cfg, out, quiet
        self.outputs: list[Path] = []
        self.summary: dict = {}
        self.failures: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows)

    def columns(self, name, **cols):
        columns_csv(self.path(name), **cols)

    def save(self, name, writer):
        writer(self.path(name))

    def figure(self, name, kind, *args, **kw):
        if not self.cfg.plots:
            return
        from . import plotting

        getattr(plotting, kind)(self.path(name), *args, **kw)

    def log(self, msg: str):
        if not self.quiet:
            print(msg)

    def check(self, name: str, ok: bool, detail: str = ""):
        self.summary[f"check_{name}"] = bool(ok)
        if not ok:
            self.failures.append(name)
        self.log(f"[{'PASS' if ok else 'FAIL'}] {name}{': ' + detail if detail else ''}")


# ---------------------------------------------------------------------------
# shared setup


def _record(cfg: C.ExperimentConfig):
    from .condexp import PathRecord
    from .grid import EnsembleHandle, build_uniform_grid
    from .noise import sample_noise
    from .timechange import sample_rate_paths

    grid = build_uniform_grid(cfg.grid.T, cfg.grid.steps)
    marks = C.build_marks(cfg)
    ens = EnsembleHandle(cfg.ensemble.n_paths, cfg.ensemble.seed)
    rates = sample_rate_paths(C.build_rate_model(cfg), grid, ens)
    return PathRecord(rates, sample_noise(rates, marks, ens))


def _fmap(cfg, flow="G"):
    from .condexp import FeatureMap

    return FeatureMap(flow, cfg.condexp.degree, cfg.condexp.k_summary)


def _grid_indices(grid, fractions):
    return [int(np.argmin(np.abs(grid.t - f * grid.T))) for f in fractions]


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(run: Run):
    from .grid import build_partition
    from .noise import check_conditional_moments

    cfg = run.cfg
    rec = _record(cfg)
    nz, rates, grid = rec.noise, rec.rates, rec.grid
    part = build_partition(grid, nz.marks, cfg.moment_level)
    rep = check_conditional_moments(nz, rates, part, cfg.moment_strata)
    run.save("moments.csv", rep.to_csv)
    run.csv("moment_pairs.csv", ["a", "b", "mean", "z"], [(p["a"], p["b"], p["mean"], p["z"]) for p in rep.pairs])
    rows = []
    for i in _grid_indices(grid, (0.25, 0.5, 0.75, 1.0)):
        B, L = nz.B[:, i], rates.cum_B[:, i]
        d = B**2 - L
        se = float(np.std(d, ddof=1) / np.sqrt(d.size)) if d.size > 1 else float("nan")
        rows.append((grid.t[i], float(np.var(B, ddof=1)) if d.size > 1 else float("nan"), float(L.mean()),
                     float(d.mean()), se))
    run.csv("variance.csv", ["t", "var_B", "mean_Lambda_B", "mean_B2_minus_Lambda", "se"], rows)
    run.columns(
        "rates.csv",
        t=grid.t,
        mean_lambda_B=rates.lambda_B.mean(axis=0),
        sd_lambda_B=rates.lambda_B.std(axis=0),
        mean_lambda_H=rates.lambda_H.mean(axis=0),
        mean_Lambda_B=rates.cum_B.mean(axis=0),
        mean_Lambda_H=rates.cum_H.mean(axis=0),
    )
    run.figure("rates.png", "line_figure", grid.t,
               {"E[lambda^B]": rates.lambda_B.mean(axis=0), "E[lambda^H]": rates.lambda_H.mean(axis=0)},
               ylabel="rate")
    run.summary.update(max_abs_z=rep.max_abs_z, n_cells=len(part), all_finite=rep.all_finite(),
                       insufficient_paths=rep.insufficient)
    if rep.insufficient:
        run.log(f"note: fewer than {rep.min_paths} paths, z-scores are indicative only")
    run.check("moments", rep.all_finite() and rep.max_abs_z < 4.0, f"max |z| = {rep.max_abs_z:.3f}")


def cmd_forward(run: Run):
    from .volterra import ControlPolicy, solve_differential, solve_direct, solve_picard

    cfg = run.cfg
    rec = _record(cfg)
    model = C.build_volterra_model(cfg)
    policy = ControlPolicy.constant(cfg.forward.control)
    nz, rates, grid = rec.noise, rec.rates, rec.grid
    direct = solve_direct(model, policy, nz, rates).X
    diff = solve_differential(model, policy, nz, rates).state.X
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        pic = solve_picard(model, policy, nz, rates, n_iter=cfg.forward.picard_iter)
    px = pic.state.X
    run.columns(
        "forward.csv",
        t=grid.t,
        mean_direct=direct.mean(axis=0),
        sd_direct=direct.std(axis=0),
        mean_differential=diff.mean(axis=0),
        mean_picard=px.mean(axis=0),
        rms_gap_differential=np.sqrt(np.mean((diff - direct) ** 2, axis=0)),
        rms_gap_picard=np.sqrt(np.mean((px - direct) ** 2, axis=0)),
    )
    run.columns("picard.csv", iteration=np.arange(1, len(pic.diffs) + 1), l2_diff=pic.diffs, sup_diff=pic.sup_diffs)
    run.figure("forward.png", "line_figure", grid.t,
               {"direct": direct.mean(axis=0), "differential": diff.mean(axis=0), "Picard": px.mean(axis=0)},
               ylabel="E[X]", styles={"differential": {"linestyle": "--"}, "Picard": {"linestyle": ":"}})
    scale = max(float(np.max(np.abs(direct))), 1e-300)
    gap = float(np.max(np.abs(diff - direct)))
    run.summary.update(
        model=model.name,
        convolution_free=model.convolution_free,
        sup_gap_differential=gap,
        relative_gap_differential=gap / scale,
        sup_gap_picard=float(np.max(np.abs(px - direct))),
        picard_iterations=len(pic.diffs),
        picard_monotone=bool(np.all(np.diff(pic.diffs) <= 0)),
    )
    run.log(f"direct vs differential sup gap {gap:.3e}; Picard vs direct {run.summary['sup_gap_picard']:.3e}")
    if model.convolution_free:
        run.check("schemes_agree", gap / scale <= 1e-12, f"relative gap {gap / scale:.3e}")


def _test_fields(grid, marks):
    M, J = grid.n_steps, marks.n_bins
    return {
        "one": (np.ones(M), np.ones((M, J))),
        "ramp": (grid.t[:-1].copy(), np.broadcast_to(marks.z, (M, J)) * (1.0 + grid.t[:-1, None])),
    }


def cmd_naderiv(run: Run):
    from .grid import build_partition
    from .naderiv import (
        duality_check,
        estimate_na_derivative,
        martingale_representation,
        reconstruct,
        relative_l2,
        target_values,
    )

    cfg = run.cfg
    rec = _record(cfg)
    fmap = _fmap(cfg)
    grid, marks = rec.grid, rec.noise.marks
    top = cfg.naderiv.level
    levels = sorted(set(cfg.partition_levels or range(1, top + 1)) | {top})
    parts = {lev: build_partition(grid, marks, lev) for lev in levels}
    recon, dual = [], []
    fields = _test_fields(grid, marks)
    for name in cfg.naderiv.targets:
        xi = target_values(name, rec)
        errs = []
        for lev in levels:
            fld = estimate_na_derivative(xi, parts[lev], rec, fmap)
            err = relative_l2(reconstruct(xi, fld, rec, fmap), xi)
            errs.append(err)
            recon.append((name, lev, err, fld.floor_hits))
            if lev == top:
                run.save(f"field_{name}.csv", fld.to_csv)
                for fname, (pb, ph) in fields.items():
                    d = duality_check(xi, pb, ph if marks.n_bins else None, fld, rec.noise)
                    dual.append((name, fname, d.lhs, d.rhs, d.se, d.z, d.passed(3.0, 1e-12)))
        run.log(f"{name}: reconstruction error by level " + ", ".join(f"{e:.4f}" for e in errs))
    run.csv("reconstruction.csv", ["target", "level", "relative_l2", "floor_hits"], recon)
    run.csv("duality.csv", ["target", "field", "lhs", "rhs", "se", "z", "passed"], dual)
    first = cfg.naderiv.targets[0]
    rep = martingale_representation(target_values(first, rec), parts[top], rec, fmap)
    run.columns("representation.csv", t=rep.t, mean_represented=rep.represented.mean(axis=0),
                mean_direct=rep.direct.mean(axis=0), rms_gap=rep.discrepancy)
    if len(levels) > 1:
        by_target = {}
        for name, lev, err, _ in recon:
            by_target.setdefault(name, []).append(err)
        run.figure("reconstruction.png", "line_figure", np.array(levels, dtype=float), by_target,
                   xlabel="partition level", ylabel="relative L2 error")
    run.summary.update(levels=levels, targets=list(cfg.naderiv.targets),
                       reconstruction={f"{n}@{lev}": e for n, lev, e, _ in recon},
                       max_duality_z=max(abs(r[5]) for r in dual) if dual else 0.0)
    run.check("duality", all(r[6] for r in dual), f"max |z| = {run.summary['max_duality_z']:.3f}")


def cmd_bsde(run: Run):
    from .bsde import BsdeSpec, solve_backward
    from .volterra import ControlPolicy, solve_direct

    cfg = run.cfg
    b = cfg.bsde
    rec = _record(cfg)
    nz, grid = rec.noise, rec.grid
    n = rec.n_paths
    if b.terminal == "constant":
        xi = np.full(n, b.terminal_value)
    elif b.terminal == "B_T":
        xi = nz.B[:, -1].copy()
    elif b.terminal == "mu_total":
        xi = nz.mu_total()[:, -1]
    else:
        model = C.build_volterra_model(cfg)
        X = solve_direct(model, ControlPolicy.constant(cfg.forward.control), nz, rec.rates).X
        rec = rec.with_state(X)
        xi = X[:, -1].copy()
    a = b.a
    driver = None if b.driver == "zero" else (lambda i, t, lam, p, qb, qh, extra: a * p)
    sol = solve_backward(BsdeSpec(xi, driver, p_mode=b.p_mode), rec, _fmap(cfg))
    run.save("bsde.csv", sol.to_csv)
    d = sol.diagnostics
    run.csv("bsde_diagnostics.csv", ["t", "r2", "condition_number", "floor_hits", "q_norm", "orthogonality"],
            [(x.t, x.r2, x.condition_number, x.floor_hits, x.q_norm, x.orthogonality) for x in d])
    series = {"E[p]": sol.p.mean(axis=0)}
    rate = 0.0 if b.driver == "zero" else a
    run.summary.update(floor_hits=sol.floor_hits, max_condition=max(x.condition_number for x in d),
                       min_r2=min(x.r2 for x in d), notes=sol.notes)
    if b.terminal == "constant":
        exact = b.terminal_value * np.exp(rate * (grid.T - grid.t))
        err = np.max(np.abs(sol.p - exact[None, :]), axis=0)
        run.columns("bsde_exact.csv", t=grid.t, mean_p=sol.p.mean(axis=0), exact=exact, max_abs_error=err)
        series["exact"] = exact
        qmax = float(max(np.max(np.abs(sol.q_b)), np.max(np.abs(sol.q_h)) if sol.q_h.size else 0.0))
        run.summary.update(max_abs_error=float(err.max()), max_abs_q=qmax)
        run.log(f"max |p - exact| = {err.max():.3e}, max |q| = {qmax:.3e}")
        if b.driver == "zero":
            run.check("constant_solution", err.max() <= 1e-8 and qmax <= 1e-8)
    run.figure("bsde.png", "line_figure", grid.t, series, ylabel="p", styles={"exact": {"linestyle": "--"}})


def _candidate_curve(cfg, grid, u_hi):
    c = cfg.mp.candidate
    if c.kind == "constant":
        return np.full(grid.n_steps + 1, c.value)
    return np.where(grid.t >= c.t_switch, u_hi, 0.0)


def cmd_check_mp(run: Run):
    cfg = run.cfg
    rec = _record(cfg)
    if cfg.mp.problem == "lq":
        _check_mp_lq(run, rec)
    else:
        _check_mp_harvest(run, rec)


def _mp_outputs(run: Run, rep):
    run.save("mp_report.csv", rep.to_csv)
    s = rep.summary()
    run.summary.update(mp=s)
    run.check("sufficient_mp", rep.passed,
              f"max gap {s['max_gap']:.3e} (tol {s['tol_max']:.1e}), concavity violations "
              f"{s['G_concavity_violation']:.1e}/{s['map_concavity_violation']:.1e}")


def _check_mp_lq(run: Run, rec):
    from .bsde import solve_backward
    from .control import HamiltonianInputs, adjoint_spec, check_sufficient, lq_objective, perturbation_gradient
    from .volterra import ControlPolicy, bump, lq_model, solve_direct

    cfg, mp = run.cfg, run.cfg.mp
    if mp.candidate.kind == "solve":
        raise C.ConfigError(["mp.candidate.kind: 'solve' is only available for problem 'harvest'"])
    model = lq_model(**(cfg.model.params if cfg.model.name == "lq" else {}))
    obj = lq_objective()
    grid, nz, rates = rec.grid, rec.noise, rec.rates
    u = _candidate_curve(cfg, grid, mp.candidate.value)
    state = solve_direct(model, ControlPolicy.deterministic(u, (mp.u_min, mp.u_max)), nz, rates)
    r = rec.with_state(state.X)
    adj = solve_backward(adjoint_spec(model, obj, state, r), r, _fmap(cfg))
    inp = HamiltonianInputs(model, obj, adj, state, r, fmap=_fmap(cfg, "F"))
    rep = check_sufficient(inp, flow="F", u_grid=np.linspace(mp.u_min, mp.u_max, mp.u_grid),
                           paths=np.arange(min(mp.max_paths, rec.n_paths)), tol_max=mp.tol_max,
                           tol_conc=mp.tol_conc)
    _mp_outputs(run, rep)
    beta = bump(grid, mp.bump_t0, mp.bump_h)
    gr = perturbation_gradient(model, obj, state, beta, nz, rates, inputs=inp, eps=mp.eps)
    run.csv("gradient.csv", ["method", "mean", "se"],
            [(k, *v) for k, v in (("finite_difference", gr.finite_difference), ("variation", gr.variation),
                                  ("hamiltonian", gr.hamiltonian))])
    agree = gr.agree(3.0, atol=1e-8)
    run.csv("gradient_pairs.csv", ["a", "b", "se_difference", "agree"],
            [(a, b, gr.pair_se[(a, b)], ok) for (a, b), ok in agree.items()])
    run.summary.update(gradient={"finite_difference": gr.finite_difference[0], "variation": gr.variation[0],
                                 "hamiltonian": gr.hamiltonian[0]})
    run.check("gradient_identity", all(agree.values()),
              ", ".join(f"{k} {v:.6g}" for k, v in run.summary["gradient"].items()))


def _check_mp_harvest(run: Run, rec):
    from .control import check_sufficient
    from .harvest import adjoint_formula, gap_tolerance, hamiltonian_inputs, simulate, solve_candidate

    cfg, mp = run.cfg, run.cfg.mp
    model = C.build_harvest_model(cfg)
    grid = rec.grid
    if mp.candidate.kind == "solve":
        u = solve_candidate(model, rec, max_iter=cfg.harvest.max_iter, fmap=_fmap(cfg, "F")).u_hat
    else:
        u = np.clip(_candidate_curve(cfg, grid, model.u_max), 0.0, model.u_max)
    st = simulate(model, u, rec)
    inp = hamiltonian_inputs(model, st, rec, fmap=_fmap(cfg, "F"))
    times = list(range(0, grid.n_steps, max(1, grid.n_steps // 20)))
    ref = adjoint_formula(model, u, rec, st, _fmap(cfg, "F")).conditional.mean(axis=0)
    tol = max(mp.tol_max, gap_tolerance(model, st, inp, times, ref))
    rep = check_sufficient(inp, u, flow="F", u_grid=np.linspace(0.0, model.u_max, mp.u_grid), times=times,
                           paths=np.arange(min(mp.max_paths, rec.n_paths)), tol_max=tol, tol_conc=mp.tol_conc)
    run.columns("candidate.csv", t=grid.t, u=u)
    _mp_outputs(run, rep)


def cmd_harvest(run: Run):
    from .harvest import (
        adjoint_bsde,
        adjoint_formula,
        optimality_report,
        relative_discrepancy,
        simulate,
        solve_candidate,
    )

    cfg, h = run.cfg, run.cfg.harvest
    rec = _record(cfg)
    model = C.build_harvest_model(cfg)
    fF = _fmap(cfg, "F")
    sol = solve_candidate(model, rec, max_iter=h.max_iter, fmap=fF)
    st = simulate(model, sol.u_hat, rec)
    formula = adjoint_formula(model, sol.u_hat, rec, st, fF).conditional
    _, via_bsde = adjoint_bsde(model, st, rec, _fmap(cfg, "G"))
    sol.cond_p_bsde = via_bsde.mean(axis=0)
    disc = relative_discrepancy(via_bsde, formula)
    opt = optimality_report(model, sol, rec, n_scan=h.n_scan, mp_paths=h.mp_paths)
    g = rec.grid
    run.save("harvest_curve.csv", sol.to_csv)
    run.save("j_scan.csv", opt.to_csv)
    run.columns("adjoint_routes.csv", t=g.t, mean_formula=formula.mean(axis=0), mean_bsde=via_bsde.mean(axis=0),
                rms_gap=np.sqrt(np.mean((via_bsde - formula) ** 2, axis=0)))
    run.csv("iterations.csv", ["iteration", "J", "max_control_change"], sol.history)
    summary = {
        "J_hat": sol.J[0],
        "J_hat_se": sol.J[1],
        "best_constant_J": max(J for _, J, _ in opt.scan),
        "relative_residual": sol.relative_residual,
        "interior_points": opt.interior_points,
        "du_H_max_z": opt.du_H_max_z,
        "route_discrepancy": disc,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "stationarity": sol.stationarity,
    }
    run.csv("harvest_summary.csv", ["quantity", "value"], sorted(summary.items()))
    run.figure("harvest_curve.png", "line_figure", g.t,
               {"u_hat": sol.u_hat, "target exp(-delta(T-t))/K": sol.target, "E[p|F_t]": sol.cond_p},
               styles={"u_hat": {"drawstyle": "steps-post"}, "target exp(-delta(T-t))/K": {"linestyle": "--"}})
    run.figure("j_scan.png", "line_figure", np.array([s[0] for s in opt.scan]),
               {"J(constant u)": [s[1] for s in opt.scan], "J(u_hat)": np.full(len(opt.scan), sol.J[0])},
               xlabel="u", ylabel="J", styles={"J(u_hat)": {"linestyle": "--"}})
    run.summary.update(summary, mp=opt.mp_summary, notes=sol.notes)
    run.log(f"J(u_hat) = {sol.J[0]:.6g} +/- {sol.J[1]:.2g}; residual {sol.relative_residual:.3%} of the target sup; "
            f"{opt.interior_points} interior points")
    run.check("constant_scan", opt.scan_ok, f"best constant J {summary['best_constant_J']:.6g}")
    run.check("sufficient_mp", bool(opt.mp_summary["passed"]), f"max gap {opt.mp_summary['max_gap']:.3e}")
    run.check("adjoint_routes", disc <= h.route_tol, f"relative discrepancy {disc:.3%}")


HANDLERS = {
    "simulate": cmd_simulate,
    "forward": cmd_forward,
    "naderiv": cmd_naderiv,
    "bsde": cmd_bsde,
    "check-mp": cmd_check_mp,
    "harvest": cmd_harvest,
}

HELP = {
    "simulate": "sample rates and noise, write conditional-moment reports",
    "forward": "solve the forward Volterra equation with three schemes",
    "naderiv": "NA-derivative fields, reconstruction and duality reports",
    "bsde": "backward solve with regression diagnostics",
    "check-mp": "sufficient maximum-principle check and gradient identity for a candidate",
    "harvest": "construct and verify the harvesting control",
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML experiment config (defaults for every key if omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    common.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (overrides ensemble.seed)")
    common.add_argument("--paths", type=int, help="number of paths (overrides ensemble.n_paths)")
    common.add_argument("--quiet", action="store_true", help="print errors only")
    p = argparse.ArgumentParser(prog="tcvolterra", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return p


def _failing_module(exc: BaseException) -> str:
    pkg = Path(__file__).parent
    mod = "cli"
    for fr in traceback.extract_tb(exc.__traceback__):
        f = Path(fr.filename)
        if f.parent == pkg:
            mod = f.stem
    return mod


def _load(args) -> C.ExperimentConfig:
    cfg = C.load_config(args.config) if args.config is not None else C.ExperimentConfig()
    try:
        return cfg.with_overrides(seed=args.seed, n_paths=args.paths)
    except ValidationError as exc:
        flag = {"seed": "--seed", "n_paths": "--paths"}
        raise C.ConfigError([f"{flag.get(e['loc'][-1], e['loc'][-1])}: {e['msg']}" for e in exc.errors()]) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except C.ConfigError as exc:
        for m in exc.messages:
            print(f"config error: {m}", file=sys.stderr)
        return CONFIG_ERROR
    out = args.out if args.out is not None else Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: cannot create output directory {out}: {exc.strerror}", file=sys.stderr)
        return CONFIG_ERROR
    run = Run(args.command, cfg, out, args.quiet)
    with open(run.path("resolved_config.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.model_dump(mode="json"), fh, sort_keys=True)
    status = OK
    try:
        HANDLERS[args.command](run)
        status = CHECK_FAILED if run.failures else OK
    except C.ConfigError as exc:
        for m in exc.messages:
            print(f"config error: {m}", file=sys.stderr)
        status = CONFIG_ERROR
    except (InvalidArgumentError, UnsupportedModelError) as exc:
        print(f"config error: {_failing_module(exc)}: {exc}", file=sys.stderr)
        status = CONFIG_ERROR
    except (NumericalBlowupError, SingularRegressionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        mod = _failing_module(exc)
        print(f"numerical failure in {mod}: {type(exc).__name__}: {exc}", file=sys.stderr)
        run.summary["error"] = f"{mod}: {type(exc).__name__}: {exc}"
        status = NUMERICAL_FAILURE
    if status == CONFIG_ERROR:
        return status
    run.outputs = [p for p in run.outputs if p.exists()]
    write_manifest(out, args.command, cfg, run.outputs, run.summary, status)
    if run.failures:
        print(f"check failed: {', '.join(run.failures)}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
