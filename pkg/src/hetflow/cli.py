"""Command-line front end.

    hetflow validate --config run.cfg
    hetflow run --config run.cfg --out results/ [--jobs 4] [--seed 7]

``run`` writes ``manifest.json`` (config echo, versions, wall time, status),
the experiment's CSV files and ``summary.json`` (with an invariant table)
into the output directory.  ``HETFLOW_OUT`` overrides ``--out``.  Exit
status: 0 success, 2 configuration error, 3 solver failure (partial
artifacts are kept and the error is noted in the manifest).
"""

from __future__ import annotations

import argparse
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import artifacts, curve_flow, diagnostics, graph_flow, homogenization
from . import forcing as forcing_mod
from .config import RunConfig, load
from .errors import ConfigError, HetflowError, InsufficientData, NotCauchy, SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class Outputs:
    """Collects artifact files written into one directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.files = []

    def csv(self, name, header, rows):
        artifacts.write_csv(self.root / name, header, rows)
        self.files.append(name)

    def json(self, name, obj):
        artifacts.write_json(self.root / name, obj)
        self.files.append(name)


def _inv(name, value, bound, ok=None, note=""):
    """One row of the invariant-violation table."""
    if ok is None:
        ok = bool(np.isfinite(value) and value <= bound)
    row = {"invariant": name, "value": value, "bound": bound, "ok": bool(ok)}
    if note:
        row["note"] = note
    return row


# ---------------------------------------------------------------------------
# writers shared by several experiments


def _curve_snapshots(out, traj, name="snapshots.csv"):
    rows = ((c.t, i, p[0], p[1]) for c in traj.curves for i, p in enumerate(c.points))
    out.csv(name, ["t", "i", "x", "y"], rows)


def _curve_records(out, traj, name="diagnostics.csv"):
    cols = diagnostics.DiagnosticsRecord.columns()
    out.csv(name, cols, ([getattr(r, c) for c in cols] for r in traj.records))


def _graph_snapshots(out, traj, name="snapshots.csv"):
    rows = ((s.t, i, x, u) for s in traj.states for i, (x, u) in enumerate(zip(s.x, s.u)))
    out.csv(name, ["t", "i", "x", "u"], rows)


def _graph_records(out, traj, name="diagnostics.csv", extra=None):
    cols = graph_flow.GraphRecord.columns()
    head = list(extra or {}) + cols
    pre = list((extra or {}).values())
    out.csv(name, head, (pre + [getattr(r, c) for c in cols] for r in traj.records))


def _curve_invariants(traj, field, sup_g):
    rows = []
    est = diagnostics.length_curvature_estimates(traj, sup_g)
    rows.append(_inv("length_growth_ratio", est.length_ratio_max, 1.01,
                     note="max L/(L0 exp(|g|^2 t/2))"))
    rows.append(_inv("curvature_energy_vs_exp_bound", est.curvature_energy, est.exp_bound * 1.01,
                     note="int int kappa^2 against 2 L0 (e^{|g|^2 T/2} - 1) + |g|^2 T"))
    rows.append(_inv("curvature_energy_vs_length_balance", est.curvature_energy,
                     est.balance_bound * 1.01,
                     note="int int kappa^2 against 2 (L0 - LT) + |g|^2 int L dt"))
    rows.append(_inv("curvature_energy_vs_corrected_exp_bound", est.curvature_energy,
                     est.corrected_exp_bound * 1.01,
                     note="int int kappa^2 against 2 L0 e^{|g|^2 T/2}"))
    eta_min = min(r.eta for r in traj.records)
    rows.append(_inv("eta_min_positive", eta_min, 0.0, ok=eta_min > 0,
                     note="min eta over samples; must stay above the bound"))
    if field.impl in ("trig", "molpwx") or field.gradient_fn is not None:
        worst = diagnostics.total_abs_curvature_check(traj, field)
        rows.append(_inv("total_abs_curvature_rate", worst, 1e-2,
                         note="d/dt int|kappa| - (|Dg| + |D2g|) L"))
    return rows


# ---------------------------------------------------------------------------
# experiments


def run_curve(cfg, out, jobs):
    field = cfg.forcing()
    curve0 = cfg.curve_initial()
    scfg = cfg.curve_solver()
    ctx = {}
    if cfg["diagnostics.residual_dt"] > 0:
        ctx["residual_dt"] = cfg["diagnostics.residual_dt"]
    traj = curve_flow.solve(curve0, field, scfg, ctx)
    _curve_snapshots(out, traj)
    _curve_records(out, traj)
    keys = ["t", "kappa_max", "length", "kappa2", "abs_kappa"]
    h = traj.history
    out.csv("history.csv", keys, zip(*(h[k] for k in keys)))
    sup_g = forcing_mod.sup_norm(field, cfg["forcing.sup_grid"])
    summary = {
        "reason": traj.reason, "t_end": traj.t_end, "T_est": traj.T_est,
        "message": traj.message, "sup_g": sup_g, "samples": len(traj.times),
    }
    eta0 = traj.records[0].eta
    summary["lifespan_lower_bound"] = curve_flow.lifespan_lower_bound(eta0, sup_g)
    if traj.reason == "blowup" and traj.T_est is not None:
        try:
            rep = curve_flow.classify_singularity(traj)
            summary["singularity"] = {"kind": rep.kind, "exponent": rep.exponent,
                                      "limit": rep.limit}
        except InsufficientData as exc:
            summary["singularity"] = {"kind": None, "note": str(exc)}
    summary["invariants"] = _curve_invariants(traj, field, sup_g)
    return traj, summary


def run_diagnostics(cfg, out, jobs):
    traj, summary = run_curve(cfg, out, jobs)
    T = cfg["diagnostics.T"] or traj.T_est
    p0 = cfg["diagnostics.p0"]
    summary["density_T"] = T
    if T is None:
        summary["density_note"] = "no blowup time given or estimated; densities skipped"
        return traj, summary
    rel = cfg["diagnostics.T_rel"]
    sens = diagnostics.density_sensitivity(traj, p0, T, rel)
    out.csv("density.csv", ["t", f"F_T*(1-{rel!r})", "F_T", f"F_T*(1+{rel!r})"], sens)
    try:
        mono = diagnostics.monotonicity_check(traj, p0, T, summary["sup_g"])
    except ValueError as exc:
        summary["monotonicity_note"] = str(exc)
        return traj, summary
    out.csv("rescaled_density.csv", ["z", "F"], zip(mono.z, mono.F))
    resc = curve_flow.rescale_type1(traj, p0, T)
    shr = [diagnostics.shrinker_residual(c) for c in resc.curves]
    out.csv("shrinker_residual.csv", ["z", "residual"], zip(resc.z, shr))
    inv = summary["invariants"]
    inv.append(_inv("monotonicity_differential", mono.worst, 1e-3,
                    note="max of F'(z) - (|g|^2/2) e^{-2z} F"))
    # the two exact bounds get a rounding slack only
    inv.append(_inv("monotonicity_integrated", mono.integrated_worst, 1e-10,
                    note="max of F(z) - e^{|g|^2 (T - t0)/4} F(z0)"))
    inv.append(_inv("local_mass_bound", mono.local_mass_worst, 1e-10,
                    note="max of mass in B(0,1) - e^{1/2} F(z)"))
    summary["shrinker_residual_last"] = shr[-1]
    return traj, summary


def _graph_invariants(traj, field, sup_g):
    rows = []
    lem = graph_flow.length_energy_check(traj, sup_g)
    rows.append(_inv("graph_length_growth", lem["worst_length"], 1e-8))
    rows.append(_inv("graph_energy_growth", lem["worst_energy"], 1e-8))
    if field.x_only:
        ok, worst = graph_flow.ut_max_nonincreasing(traj)
        rows.append(_inv("ut_max_nonincreasing", worst, 1e-8, ok=ok))
        fin = all(math.isfinite(r.arctan_x2) and math.isfinite(r.arctan_t2_cum)
                  for r in traj.records)
        rows.append(_inv("bounds_58_finite", max(r.arctan_x2 for r in traj.records),
                         float("inf"), ok=fin))
    return rows


def run_graph(cfg, out, jobs):
    field = cfg.forcing()
    u0 = cfg.graph_initial()
    traj = graph_flow.solve_graph(u0, field, cfg.graph_solver())
    _graph_snapshots(out, traj)
    _graph_records(out, traj)
    sup_g = forcing_mod.sup_norm(field, cfg["forcing.sup_grid"])
    summary = {"reason": traj.reason, "t_end": traj.t_end, "sup_g": sup_g,
               "samples": len(traj.times),
               "invariants": _graph_invariants(traj, field, sup_g)}
    return traj, summary


def _weak_artifacts(out, rep, field):
    out.csv("gaps.csv", ["delta_a", "delta_b", "sup_distance"],
            ((a, b, g) for a, b, g in zip(rep.deltas[:-1], rep.deltas[1:], rep.gaps)))
    cols = graph_flow.GraphRecord.columns()
    out.csv("diagnostics.csv", ["delta"] + cols,
            ([d] + [getattr(r, c) for c in cols]
             for d, tr in zip(rep.deltas, rep.trajectories) for r in tr.records))
    _graph_snapshots(out, rep.finest, "snapshots_finest.csv")
    T = rep.finest.t_end
    tests = graph_flow.default_test_functions(T)
    res = [graph_flow.weak_residual(rep.finest, field, phi) for phi in tests]
    out.csv("weak_residuals.csv", ["k", "t0", "t1", "residual"],
            ((k, phi.t0, phi.t1, r) for k, (phi, r) in enumerate(zip(tests, res))))
    return res


def run_weak(cfg, out, jobs):
    field = cfg.forcing()
    u0 = cfg.graph_initial()
    try:
        rep = graph_flow.solve_weak_Linfty(u0, field, cfg["weak.deltas"], cfg.graph_solver(),
                                           jobs=jobs)
    except NotCauchy as exc:
        _weak_artifacts(out, exc.report, field)
        raise
    res = _weak_artifacts(out, rep, field)
    inv = [_inv("gaps_strictly_decreasing", 0.0 if rep.cauchy else 1.0, 0.0, ok=rep.cauchy),
           _inv("finest_gap", rep.gaps[-1], 1e-3),
           _inv("weak_residual_max", max(abs(r) for r in res), 1e-3)]
    for d, ok, w in zip(rep.deltas, rep.ut_monotone, rep.ut_worst_increase):
        inv.append(_inv(f"ut_max_nonincreasing[delta={d!r}]", w, 1e-8, ok=ok))
    summary = {"deltas": rep.deltas, "gaps": rep.gaps, "cauchy": rep.cauchy,
               "weak_residuals": res, "invariants": inv}
    return rep, summary


def run_homogenize(cfg, out, jobs):
    field = cfg.forcing()
    si = cfg["solver.sample_interval"] or cfg["homogenize.T"] / 10
    scfg = homogenization.EpsSweepConfig(
        tuple(cfg["homogenize.eps"]), field, cfg.graph_initial_factory(),
        T=cfg["homogenize.T"], nodes_per_cell=cfg["homogenize.nodes_per_cell"],
        cfl=cfg["solver.cfl"], sample_interval=si)
    rep = homogenization.sweep(scfg, jobs=jobs)
    if rep.limit_compared:
        out.csv("distances.csv", ["eps", "t", "distance"],
                ((float(e), t, d) for e, ds in zip(rep.eps, rep.distances)
                 for t, d in zip(rep.times, ds)))
    out.json("report.json", rep.to_json())
    inv = []
    if rep.limit_compared:
        inv.append(_inv("distances_strictly_decreasing", 0.0 if rep.strictly_decreasing else 1.0,
                        0.0, ok=rep.strictly_decreasing))
        rel = rep.final_distances[-1] / rep.amplitude if rep.amplitude > 0 else float("nan")
        inv.append(_inv("finest_distance_over_amplitude", rel, 0.02))
        inv.append(_inv("shift_estimate", max(rep.shift_estimate_worst), 0.0))
    summary = {"eps": [str(e) for e in cfg["homogenize.eps"]], "invariants": inv,
               "report": rep.to_json()}
    return rep, summary


def run_effective_speed(cfg, out, jobs):
    field = cfg.forcing()
    tol, ns = cfg["speed.tol_G"], cfg["speed.samples"]
    speeds = [homogenization.effective_c(field, sl, tol, ns) for sl in cfg["speed.slopes"]]
    cb = [homogenization.cbar(field, d, tol, ns) for d in cfg["speed.directions"]]
    head = ["slope", "c", "branch", "pinned", "zero_at", "min_abs_G"]
    out.csv("speeds.csv", head, ([e.slope, e.c, e.branch, e.pinned, e.zero_at, e.min_abs_G]
                                 for e in speeds + cb))
    out.csv("G_samples.csv", ["slope", "s", "G"],
            ((e.slope, s, g) for e in speeds + cb for s, g in zip(e.s, e.G)))
    inv = []
    for e in speeds + cb:
        sound = (e.c == 0.0) if e.pinned else (e.branch != homogenization.BRANCH_HARMONIC
                                               or np.all(np.sign(e.G) == np.sign(e.c)))
        inv.append(_inv(f"branch_soundness[{e.slope}]", 0.0 if sound else 1.0, 0.0, ok=sound))
    waves = []
    T = cfg["speed.T"] or None
    for eps in cfg["speed.eps"]:
        for sl in cfg["speed.slopes"]:
            if not sl.is_rational:
                continue
            w = homogenization.measure_wave_speed(field, eps, sl, T=T)
            waves.append((str(eps), w.slope, w.c, w.r2, w.pinned, w.displacement,
                          w.max_excursion))
    if waves:
        out.csv("wave_speeds.csv", ["eps", "slope", "c", "r2", "pinned", "displacement",
                                    "max_excursion"], waves)
    summary = {"speeds": [{"slope": e.slope, "c": e.c, "branch": e.branch, "pinned": e.pinned}
                          for e in speeds + cb],
               "waves": [dict(zip(["eps", "slope", "c", "r2", "pinned"], w[:5])) for w in waves],
               "invariants": inv}
    return speeds, summary


def run_scan(cfg, out, jobs):
    field = cfg.forcing()
    rows, flagged, plateau = homogenization.discontinuity_scan(
        field, cfg["speed.slopes"], cfg["speed.tol_G"])

    def num_den(sl):
        return (sl.num, sl.den) if sl.is_rational else (sl.value, "irr")

    out.csv("scan.csv", ["alpha_num", "alpha_den_or_tag", "c", "branch", "jump"],
            (num_den(r.slope) + (r.c, r.branch, r.jump) for r in rows))
    summary = {"torus_mean": plateau,
               "flagged": [{"slope": r.slope.label(), "c": r.c, "jump": r.jump} for r in flagged],
               "invariants": []}
    return rows, summary


EXPERIMENT_RUNNERS = {
    "curve": run_curve,
    "graph": run_graph,
    "weak": run_weak,
    "homogenize": run_homogenize,
    "effective-speed": run_effective_speed,
    "discontinuity-scan": run_scan,
    "diagnostics": run_diagnostics,
}


# ---------------------------------------------------------------------------
# entry points


def _versions():
    import numba
    import scipy

    return {"hetflow": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def prepare(cfg: RunConfig):
    """Build forcing, initial datum and solver settings without solving."""
    try:
        cfg.forcing()
        if cfg.experiment in ("graph", "weak", "homogenize"):
            cfg.graph_initial()
            cfg.graph_solver()
        elif cfg.experiment in ("curve", "diagnostics"):
            cfg.curve_initial()
            cfg.curve_solver()
    except ConfigError:
        raise
    except (ValueError, OSError, SolverError) as exc:
        raise ConfigError(f"invalid settings: {exc}") from None


def validate(path):
    cfg = load(path)
    prepare(cfg)
    return cfg


def run(path, out_dir=None, jobs=1, seed=None):
    """Execute a config; returns the exit status."""
    t0 = time.perf_counter()
    cfg = validate(path)
    if seed is not None:
        cfg.values["seed"] = int(seed)
        cfg.raw["seed"] = str(int(seed))
    out_dir = os.environ.get("HETFLOW_OUT") or out_dir or cfg["output.dir"]
    out = Outputs(out_dir)
    out.root.mkdir(parents=True, exist_ok=True)
    status, error, summary = "ok", None, None
    try:
        _, summary = EXPERIMENT_RUNNERS[cfg.experiment](cfg, out, jobs)
    except HetflowError as exc:
        status, error = "solver-failure", f"{type(exc).__name__}: {exc}"
        partial = getattr(exc, "trajectory", None)
        if partial is not None and isinstance(partial, graph_flow.GraphTrajectory):
            _graph_snapshots(out, partial, "snapshots_partial.csv")
            _graph_records(out, partial, "diagnostics_partial.csv")
    if summary is not None:
        inv = summary.get("invariants", [])
        summary["violations"] = [r["invariant"] for r in inv if not r["ok"]]
        out.json("summary.json", summary)
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.echo(),
        "config_source": str(path),
        "seed": cfg["seed"],
        "jobs": jobs,
        "versions": _versions(),
        "status": status,
        "error": error,
        "files": sorted(out.files),
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    artifacts.write_json(out.root / "manifest.json", manifest)
    return EXIT_OK if status == "ok" else EXIT_SOLVER


def build_parser():
    p = argparse.ArgumentParser(prog="hetflow",
                                description="Forced curve-shortening flow laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True, help="config file (key = value lines)")
    r.add_argument("--out", default=None, help="output directory (HETFLOW_OUT overrides)")
    r.add_argument("--jobs", type=int, default=1, help="worker threads for independent solves")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    v = sub.add_parser("validate", help="check a config without computing")
    v.add_argument("--config", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = validate(args.config)
            print(f"ok: {args.config} ({cfg.experiment})")
            return EXIT_OK
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1", "jobs")
        code = run(args.config, args.out, args.jobs, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_SOLVER:
        print("solver failure; see manifest.json", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
