"""Command-line driver: baseline, continue, fold, quotient, verify, sweep."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, build, parse_config
from .continuation import (Branch, BranchPoint, ContinuationOptions, FoldOptions, branch_start, detect_fold,
                           fold_by_bisection, lambda_star_minimax, nonexistence_probe, observed_order,
                           refine_fold_moore_spence, refine_minimax, stable_sequence_extract, trace_branch,
                           two_solution_pairs, verify_branch)
from .errors import ConfigError, SaddleFoldError, SolverError
from .mesh import l2_norm
from .operator import NewtonOptions, newton_solve
from .quotient import criticality_equivalence_check, inner_inf_probe, minimizing_sequence_test
from .spectral import default_tol, tag_for
from .sublinear import FixedPointOptions, baseline_state, energy

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
BRANCH_COLUMNS = ["s", "lambda", "h1norm", "lgamma0_norm", "lgamma_norm", "lambda1", "stability",
                  "min_u_over_d", "residual", "dlambda_ds", "step"]


# --------------------------------------------------------------------------- output helpers


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, obj):
    atomic_write(path, (json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n").encode())


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    atomic_write(path, buf.getvalue().encode())


def write_npy(path: Path, arr):
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(arr, dtype=float), allow_pickle=False)
    atomic_write(path, buf.getvalue())


# --------------------------------------------------------------------------- option plumbing


def newton_options(cfg: RunConfig, grid) -> NewtonOptions:
    s = cfg.solver
    return NewtonOptions(tol=s.tol_newton, max_iter=s.max_iter_newton,
                         delta_floor=s.delta_floor_rel * float(grid.d.min()))


def continuation_options(cfg: RunConfig) -> ContinuationOptions:
    s = cfg.solver
    return ContinuationOptions(ds=s.ds, ds_max=s.ds_max, ds_fold=s.ds_fold, fold_zone=s.fold_zone,
                               max_steps=s.max_steps, arclength=s.arclength, lambda_min=s.lambda_min,
                               lambda_max=s.lambda_max, post_fold_arclength=s.post_fold_arclength,
                               tol=s.tol_newton)


def derived_settings(cfg: RunConfig) -> dict:
    grid, spec = build(cfg)
    return {
        "gamma0": spec.gamma0, "space_dim": spec.space_dim,
        "growth_constants": list(spec.growth_constants), "coercivity_constants": list(spec.coercivity_constants),
        "stability_tol": default_tol(grid), "stencil_lambda1": grid.stencil_lambda1,
        "delta_floor": cfg.solver.delta_floor_rel * float(grid.d.min()),
        "h": list(grid.h), "N": grid.size,
    }


# --------------------------------------------------------------------------- branch storage


def branch_rows(branch: Branch):
    for p in branch.points:
        yield [p.arclength, p.lam, *p.norms, p.lambda1, p.stability.label, p.min_u_over_d, p.residual,
               p.dlam_ds, p.step]


def save_branch(out: Path, branch: Branch) -> list:
    write_csv(out / "branch.csv", BRANCH_COLUMNS, branch_rows(branch))
    write_npy(out / "branch_states.npy", np.array([p.state for p in branch.points]))
    write_json(out / "branch.json", {"fold_markers": branch.fold_markers, "meta": branch.meta,
                                     "points": len(branch)})
    return ["branch.csv", "branch_states.npy", "branch.json"]


def load_branch(out: Path, grid) -> Branch:
    try:
        states = np.load(out / "branch_states.npy", allow_pickle=False)
        meta = json.loads((out / "branch.json").read_text())
        with open(out / "branch.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise ConfigError(f"no stored branch in {out}: run `continue` first ({exc.filename})") from exc
    tol = default_tol(grid)
    points = []
    for row, s in zip(rows, states):
        lam1 = float(row["lambda1"])
        points.append(BranchPoint(
            float(row["lambda"]), s, lam1, tag_for(lam1, tol), float(row["s"]),
            (float(row["h1norm"]), float(row["lgamma0_norm"]), float(row["lgamma_norm"])),
            float(row["residual"]), float(row["dlambda_ds"]), float(row["step"]), float(row["min_u_over_d"])))
    return Branch(points, meta["fold_markers"], meta["meta"])


# --------------------------------------------------------------------------- subcommands


def cmd_baseline(cfg: RunConfig, out: Path) -> tuple[dict, list]:
    grid, spec = build(cfg)
    wbar, rep = baseline_state(spec, grid, FixedPointOptions(tol=cfg.solver.fixed_point_tol))
    newton = newton_solve(spec, grid, wbar * 1.5, 0.0, newton_options(cfg, grid))
    rep["newton_max_difference"] = float(np.max(np.abs(newton.state - wbar)))
    rep["energy"] = energy(spec, grid, wbar)
    header = [f"x{k}" for k in range(grid.dim)] + [f"w{i + 1}" for i in range(spec.m)]
    write_csv(out / "baseline.csv", header, np.column_stack([grid.coords, wbar.T]))
    write_json(out / "baseline.json", rep)
    return rep, ["baseline.csv", "baseline.json"]


def _trace(cfg, grid, spec):
    wbar, _ = baseline_state(spec, grid, FixedPointOptions(tol=cfg.solver.fixed_point_tol))
    return wbar, trace_branch(spec, grid, branch_start(spec, grid, wbar), continuation_options(cfg))


def cmd_continue(cfg: RunConfig, out: Path) -> tuple[dict, list]:
    grid, spec = build(cfg)
    _, branch = _trace(cfg, grid, spec)
    files = save_branch(out, branch)
    lams = branch.lambdas
    summary = {"points": len(branch), "fold_markers": branch.fold_markers,
               "lambda_range": [float(lams.min()), float(lams.max())]}
    return summary, files


def _stored_or_traced(cfg, out, grid, spec):
    if (out / "branch_states.npy").exists():
        return load_branch(out, grid), []
    _, branch = _trace(cfg, grid, spec)
    return branch, save_branch(out, branch)


def _refine(cfg, grid, spec, branch):
    brackets = detect_fold(branch)
    opts = FoldOptions(tol_F=cfg.solver.fold_tol_F, tol_Fv=cfg.solver.fold_tol_Fv)
    return brackets, refine_fold_moore_spence(spec, grid, branch, brackets[0], opts)


def cmd_fold(cfg: RunConfig, out: Path) -> tuple[dict, list]:
    grid, spec = build(cfg)
    branch, files = _stored_or_traced(cfg, out, grid, spec)
    brackets, fold = _refine(cfg, grid, spec, branch)
    oracle = fold_by_bisection(spec, grid, branch, brackets[0])
    refined = refine_minimax(spec, grid, branch, brackets[0], probe_trials=cfg.solver.probe_trials)
    report = fold.to_json(grid)
    report.update({
        "brackets": [[b.lo, b.hi] for b in brackets],
        "null_vector_positive": bool(np.all(fold.null_vector > 0)),
        "bisection_lambda_star": oracle.lambda_star,
        "bisection_relative_gap": abs(oracle.lambda_star - fold.lambda_star) / fold.lambda_star,
        "minimax_refined_lambda_star": refined["lambda_s"],
        "branch_lambda_range": [float(branch.lambdas.min()), float(branch.lambdas.max())],
    })
    write_json(out / "fold.json", report)
    write_npy(out / "fold_state.npy", np.array([fold.state, fold.null_vector]))
    return report, files + ["fold.json", "fold_state.npy"]


def cmd_quotient(cfg: RunConfig, out: Path) -> tuple[dict, list]:
    grid, spec = build(cfg)
    branch, files = _stored_or_traced(cfg, out, grid, spec)
    _, fold = _refine(cfg, grid, spec, branch)
    s = cfg.solver
    at_fold = inner_inf_probe(spec, grid, fold.state, trials=100, tol=s.probe_tol, seed=cfg.seed)
    off = inner_inf_probe(spec, grid, 1.1 * fold.state, trials=100, tol=s.probe_tol, seed=cfg.seed)
    minimax = lambda_star_minimax(spec, grid, branch, fold, probe_trials=s.probe_trials)
    eq = criticality_equivalence_check(spec, grid, fold.state, fold.null_vector, fold.lambda_star)
    seq = minimizing_sequence_test(spec, grid, 1.1 * fold.state, 50)
    report = {
        "fold_probe": {"kind": at_fold.kind, "value": at_fold.value, "spread": at_fold.spread,
                       "residual": at_fold.residual},
        "perturbed_probe": {"kind": off.kind, "value": off.value, "residual": off.residual},
        "minimax": minimax,
        "equivalence_at_fold": {"left": eq.left, "right": eq.right, "bounds": eq.bounds,
                                "asymmetry": eq.asymmetry, "holds": eq.holds},
        "minimizing_sequence": {"first": seq.values[0], "last": seq.values[-1],
                                "grad_norm_last": seq.grad_norms[-1], "vanishing": seq.vanishing},
    }
    write_json(out / "quotient.json", report)
    return report, files + ["quotient.json"]


def cmd_verify(cfg: RunConfig, out: Path) -> tuple[dict, list]:
    grid, spec = build(cfg)
    branch = load_branch(out, grid)
    wbar, _ = baseline_state(spec, grid, FixedPointOptions(tol=cfg.solver.fixed_point_tol))
    report = verify_branch(spec, grid, branch, wbar, cfg.solver.barrier_tol)
    tol = max(cfg.solver.tol_newton, 0.0)
    report["residuals"] = {"passed": bool(all(p.residual <= max(tol, 1e-8) for p in branch.points)),
                           "checked": len(branch)}
    if branch.fold_markers:
        try:
            _, fold = _refine(cfg, grid, spec, branch)
            seq = stable_sequence_extract(spec, grid, branch, fold)
            report["stable_sequence"] = {k: v for k, v in seq.items() if k != "table"}
            probe_hi = nonexistence_probe(spec, grid, 1.1 * fold.lambda_star, cfg.solver.nonexistence_seeds,
                                          wbar, branch, cfg.seed, newton_options(cfg, grid))
            probe_lo = nonexistence_probe(spec, grid, 0.9 * fold.lambda_star, cfg.solver.nonexistence_seeds,
                                          wbar, branch, cfg.seed, newton_options(cfg, grid))
            report["nonexistence"] = {
                "above": {k: v for k, v in probe_hi.items() if k != "stable_states"},
                "below": {k: v for k, v in probe_lo.items() if k != "stable_states"},
                "passed": probe_hi["stable"] == 0 and probe_lo["stable"] > 0,
            }
            pairs = two_solution_pairs(spec, grid, branch)
            report["two_solution_pairs"] = [{"lambda": p["lambda"], "distance_h1": p["distance_h1"]} for p in pairs]
        except SaddleFoldError as exc:
            report["fold_checks_error"] = {"type": type(exc).__name__, "message": str(exc)}
            report["passed"] = False
    report["passed"] = bool(report["passed"] and report["residuals"]["passed"]
                            and report.get("nonexistence", {}).get("passed", True))
    write_json(out / "verify.json", report)
    return report, ["verify.json"]


def _sweep_job(cfg: RunConfig, n: int, out: str) -> dict:
    sub = Path(out)
    cfg.grid.n_per_axis = (n,)
    cmd_continue(cfg, sub)
    report, _ = cmd_fold(cfg, sub)
    return {"n": n, "h": report["grid"]["h"][0], "lambda_star": report["lambda_star"],
            "minimax_lambda_star": report["minimax_refined_lambda_star"],
            "bisection_lambda_star": report["bisection_lambda_star"]}


def cmd_sweep(cfg: RunConfig, out: Path) -> tuple[dict, list]:
    ns = list(cfg.sweep.n_per_axis)
    with ProcessPoolExecutor(max_workers=max(1, cfg.sweep.workers)) as pool:
        futures = [pool.submit(_sweep_job, cfg, n, str(out / f"n{n}")) for n in ns]
        rows = [f.result() for f in futures]
    write_csv(out / "sweep.csv", ["n", "h", "lambda_star", "minimax_lambda_star", "bisection_lambda_star"],
              [[r["n"], r["h"], r["lambda_star"], r["minimax_lambda_star"], r["bisection_lambda_star"]]
               for r in rows])
    report = {"runs": rows}
    if len(rows) >= 3:
        ms = observed_order([r["lambda_star"] for r in rows[-3:]])
        mm = observed_order([r["minimax_lambda_star"] for r in rows[-3:]])
        report["moore_spence"] = ms
        report["minimax"] = mm
        report["routes_agree"] = bool(abs(ms["extrapolated"] - mm["extrapolated"])
                                      <= max(ms["error_estimate"], mm["error_estimate"]))
    write_json(out / "sweep.json", report)
    return report, ["sweep.csv", "sweep.json"] + [f"n{n}" for n in ns]


COMMANDS = {"baseline": cmd_baseline, "continue": cmd_continue, "fold": cmd_fold, "quotient": cmd_quotient,
            "verify": cmd_verify, "sweep": cmd_sweep}


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="saddlefold", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="sectioned key = value file")
    ap.add_argument("--out-dir", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tol-newton", type=float)
    ap.add_argument("--max-steps", type=int)
    ap.add_argument("--lambda-max", type=float)
    return ap


def load_config(args) -> RunConfig:
    text = args.config.read_text(encoding="utf-8") if args.config else ""
    cfg = parse_config(text)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tol_newton is not None:
        cfg.solver.tol_newton = args.tol_newton
    if args.max_steps is not None:
        cfg.solver.max_steps = args.max_steps
    if args.lambda_max is not None:
        cfg.solver.lambda_max = args.lambda_max
    if args.out_dir is not None:
        cfg.output.directory = str(args.out_dir)
    return cfg


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, OSError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, SaddleFoldError)) and not isinstance(exc, ValueError):
        return EXIT_SOLVER
    return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out_dir or Path("out")
    start = time.perf_counter()
    try:
        cfg = load_config(args)
        out = Path(cfg.output.directory)
        summary, files = COMMANDS[args.command](cfg, out)
    except (SaddleFoldError, OSError, ValueError) as exc:
        code = _exit_code(exc)
        write_json(out / "error.json", {"command": args.command, "type": type(exc).__name__,
                                        "code": getattr(exc, "code", "io-error"), "message": str(exc),
                                        "exit_code": code})
        print(f"saddlefold {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    status = EXIT_VERIFY if args.command == "verify" and not summary["passed"] else EXIT_OK
    write_json(out / "manifest.json", {
        "command": args.command, "config": cfg.to_dict(), "config_hash": cfg.digest(), "seed": cfg.seed,
        "derived": derived_settings(cfg), "outputs": files, "exit_code": status,
        "versions": {"saddlefold": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": time.perf_counter() - start,
    })
    print(f"saddlefold {args.command}: wrote {', '.join(files)} to {out}")
    return status
