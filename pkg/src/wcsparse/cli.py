"""Command-line entry point.

Subcommands: solve (one instance from a manifest), phase (success
probability vs. sparsity sweep), rsnr (step-size x noise sweep), analyze
(convergence constants report), pinv-report (per-step pseudo-inverse
refinement precision).

Exit codes: 0 success, 1 configuration or I/O error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, harness, pinv, solver
from .penalty import Penalty
from .pinv import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _load_array(path: str) -> np.ndarray:
    if str(path).endswith(".csv"):
        return pinv.read_matrix_csv(path)
    return pinv.read_matrix(path)


def _load_vector(path: str) -> np.ndarray:
    return _load_array(path).ravel()


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _build_model(a, manifest):
    mode = manifest.get("projection", "exact")
    if mode == "exact":
        return pinv.exact_pinv(a)
    if mode == "approx":
        return pinv.ben_israel(a, int(manifest.get("pinv_iters", 4)))
    raise ValueError(f"unknown projection mode: {mode!r}")


def cmd_solve(args) -> int:
    manifest = _load_json(args.manifest)
    base = Path(args.manifest).parent

    def respath(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    a = _load_array(respath(manifest["A"]))
    y = _load_vector(respath(manifest["y"]))
    x_star = (_load_vector(respath(manifest["x_star"]))
              if manifest.get("x_star") else None)
    pen = Penalty.from_json(manifest["penalty"])
    cfg_obj = manifest.get("config", {})
    cfg = solver.SolverConfig(
        kappa=args.kappa if args.kappa is not None else float(cfg_obj.get("kappa", 1e-4)),
        max_iters=args.max_iters if args.max_iters is not None else int(cfg_obj.get("max_iters", 100_000)),
        early_stop_tol=float(cfg_obj.get("early_stop_tol", 0.0)),
        trace_every=int(cfg_obj.get("trace_every", 0)),
    )
    model = _build_model(a, manifest)
    if model.proj_mode == "approx":
        result = solver.apgg_solve(model, pen, y, cfg, x_star=x_star)
    else:
        result = solver.pgg_solve(model, pen, y, cfg, x_star=x_star)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    x_hat_path = out / "x_hat.bin"
    pinv.write_matrix(x_hat_path, result.x_hat.reshape(1, -1))
    report = {
        "x_hat_path": str(x_hat_path),
        "iters_run": result.iters_run,
        "final_residual": result.final_residual,
    }
    if x_star is not None:
        report["rsnr"] = harness.rsnr_db(result.x_hat, x_star)
    with open(out / "result.json", "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _spec_from_args(args) -> harness.ExperimentSpec:
    spec = harness.ExperimentSpec.from_json(_load_json(args.spec))
    if args.seed is not None:
        spec = replace(spec, base_seed=args.seed)
    if args.solver is not None:
        spec = replace(spec, solver=args.solver)
    if args.kappa is not None:
        spec = replace(spec, kappas=(args.kappa,))
    if args.msnr is not None:
        msnr = math.inf if args.msnr == "inf" else float(args.msnr)
        spec = replace(spec, msnrs=(msnr,))
    if args.max_iters is not None:
        spec = replace(spec, max_iters=args.max_iters)
    if args.penalty is not None:
        spec = replace(spec, penalty=Penalty.from_json(json.loads(args.penalty)))
    return spec


def cmd_phase(args) -> int:
    raw = _load_json(args.spec)
    grid = raw.pop("nonconvexity_grid", None)
    grid_kind = raw.pop("penalty_kind", "mcp")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if grid is not None:
        # grid expansion supplies the penalty per grid value
        raw.setdefault("penalty", {"kind": grid_kind})
        base_spec = harness.ExperimentSpec.from_json(raw)
        if args.seed is not None:
            base_spec = replace(base_spec, base_seed=args.seed)
        specs = harness.expand_nonconvexity_grid(base_spec, grid_kind, grid)
    else:
        specs = [_spec_from_args(args)]

    all_records = []
    kmaxes = {}
    for sp in specs:
        records, kmax = harness.run_phase(sp, jobs=args.jobs)
        all_records.extend(records)
        kmaxes[sp.experiment_id] = kmax
    harness.write_trials_csv(out / "trials.csv", all_records, timing=args.timing)
    harness.write_aggregate_csv(out / "aggregate.csv", all_records, timing=args.timing)
    with open(out / "kmax.json", "w") as fh:
        json.dump(kmaxes, fh, indent=2)
    print(json.dumps(kmaxes, indent=2))
    return EXIT_OK


def cmd_rsnr(args) -> int:
    spec = _spec_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = harness.run_rsnr_sweep(spec, jobs=args.jobs)
    harness.write_trials_csv(out / "trials.csv", records, timing=args.timing)
    harness.write_aggregate_csv(out / "aggregate.csv", records, timing=args.timing)
    return EXIT_OK


def cmd_analyze(args) -> int:
    manifest = _load_json(args.instance)
    base = Path(args.instance).parent
    a_path = Path(manifest["A"])
    a = _load_array(a_path if a_path.is_absolute() else base / a_path)
    pen = Penalty.from_json(manifest["penalty"])
    model = _build_model(a, manifest)
    kappa = args.kappa if args.kappa is not None else float(
        manifest.get("config", {}).get("kappa", 0.0))
    report = analysis.analysis_report(pen, model, args.gamma, args.m0,
                                      kappa=kappa, noise_norm=args.noise_norm,
                                      tau=args.tau)
    text = json.dumps(report, indent=2)
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "analysis.json", "w") as fh:
            fh.write(text)
    print(text)
    return EXIT_OK


def cmd_pinv_report(args) -> int:
    a = _load_array(args.matrix)
    rows = pinv.ben_israel_trace(a, args.k)
    print("k,zeta,d")
    for row in rows:
        print(f"{row['k']},{row['zeta']:.17g},{row['d']:.17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wcsparse",
                                description="Sparse recovery with weakly convex penalties")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec_cmd=False):
        sp.add_argument("--seed", type=int, default=None, help="override base seed")
        sp.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
        sp.add_argument("--solver", choices=harness.SOLVERS, default=None)
        sp.add_argument("--kappa", type=float, default=None)
        sp.add_argument("--msnr", default=None, help="measurement SNR in dB, or 'inf'")
        sp.add_argument("--penalty", default=None, help="penalty JSON object")
        sp.add_argument("--max-iters", dest="max_iters", type=int, default=None)
        sp.add_argument("--timing", action="store_true",
                        help="write measured wall times to CSV (breaks byte-identical reruns)")

    sp = sub.add_parser("solve", help="solve one instance from a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("phase", help="success probability vs sparsity sweep")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("rsnr", help="step-size x noise sweep")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_rsnr)

    sp = sub.add_parser("analyze", help="convergence constants report")
    sp.add_argument("instance")
    sp.add_argument("--gamma", type=float, default=0.5,
                    help="assumed null-space constant")
    sp.add_argument("--m0", type=float, required=True,
                    help="initial-distance bound")
    sp.add_argument("--kappa", type=float, default=None)
    sp.add_argument("--noise-norm", dest="noise_norm", type=float, default=0.0)
    sp.add_argument("--tau", type=float, default=0.0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("pinv-report", help="per-step refinement precision")
    sp.add_argument("matrix")
    sp.add_argument("--k", type=int, default=4)
    sp.set_defaults(func=cmd_pinv_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
