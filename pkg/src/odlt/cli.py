"""Command line interface.

Subcommands:
  synthetic    run the synthetic Monte Carlo benchmark over a grid of point
               counts and noise levels, writing one CSV row per cell/method
  eval-colmap  evaluate solvers against the poses stored in COLMAP text
               models, optionally with extra pixel noise
  solve        solve a single problem from a small text file and print the
               pose

Every CSV starts with a comment manifest (command line, config as JSON,
seed, package version, start time) so a results file is reproducible from
its own header. Floats are written with repr() so rows are exact.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

import numpy as np

from . import __version__
from .errors import ColmapParseError, PnpError
from .evaluation import (
    CENTERED_BOX,
    UNCENTERED_BOX,
    SyntheticScenario,
    compute_metrics,
    default_workers,
    run_monte_carlo,
)
from .geometry import CameraIntrinsics, Correspondence
from .solvers import METHODS, SolverConfig, solve

CSV_COLUMNS = (
    "scenario",
    "n",
    "sigma",
    "method",
    "rot_rmse_deg",
    "pos_rmse",
    "mean_reproj_px",
    "mean_runtime_ms",
    "failures",
    "trials",
)

_SCENARIO_BOXES = {"centered": CENTERED_BOX, "uncentered": UNCENTERED_BOX}


def _fmt(x) -> str:
    return repr(float(x))


def _manifest_lines(args: argparse.Namespace, config: dict) -> list:
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return [
        "# command: " + " ".join(sys.argv if sys.argv else ["odlt"]),
        "# config: " + json.dumps(config, sort_keys=True),
        f"# seed: {getattr(args, 'seed', 0)}",
        f"# version: {__version__}",
        f"# started: {started}",
    ]


def _write_csv(path, manifest, header, rows) -> None:
    out = sys.stdout if path == "-" else open(path, "w")
    try:
        for line in manifest:
            out.write(line + "\n")
        out.write(",".join(header) + "\n")
        for row in rows:
            out.write(",".join(row) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def _int_list(text: str) -> list:
    return [int(tok) for tok in text.split(",") if tok]


def _float_list(text: str) -> list:
    return [float(tok) for tok in text.split(",") if tok]


def _method_list(text: str) -> list:
    methods = [tok.strip() for tok in text.split(",") if tok.strip()]
    for m in methods:
        if m not in METHODS:
            raise argparse.ArgumentTypeError(
                f"unknown method {m!r} (choose from {', '.join(METHODS)})"
            )
    return methods


def _cmd_synthetic(args: argparse.Namespace) -> int:
    config = {
        "scenario": args.scenario,
        "n_list": args.n_list,
        "sigma_list": args.sigma_list,
        "trials": args.trials,
        "seed": args.seed,
        "methods": args.methods,
        "timing": not args.no_timing,
        "timing_reps": args.timing_reps,
        "workers": args.workers,
    }
    rows = []
    for n in args.n_list:
        for sigma in args.sigma_list:
            scenario = SyntheticScenario(
                box=_SCENARIO_BOXES[args.scenario],
                n=n,
                sigma_u=sigma,
                trials=args.trials,
                seed=args.seed,
            )
            summary = run_monte_carlo(
                scenario,
                args.methods,
                collect_timing=not args.no_timing,
                timing_reps=args.timing_reps,
                workers=args.workers,
            )
            for method, agg in zip(args.methods, summary):
                runtime = "" if args.no_timing else _fmt(agg["mean_runtime_ms"])
                rows.append(
                    (
                        args.scenario,
                        str(n),
                        _fmt(sigma),
                        method,
                        _fmt(agg["rot_rmse_deg"]),
                        _fmt(agg["pos_rmse"]),
                        _fmt(agg["mean_reproj_px"]),
                        runtime,
                        str(agg["failures"]),
                        str(agg["trials"]),
                    )
                )
    _write_csv(args.out, _manifest_lines(args, config), CSV_COLUMNS, rows)
    return 0


def _cmd_eval_colmap(args: argparse.Namespace) -> int:
    from .colmap import build_problems, parse_model
    from .geometry import rotation_angle_deg

    config = {
        "model_dirs": args.model_dir,
        "methods": args.methods,
        "min_points": args.min_points,
        "noise_px": args.noise_px,
        "seed": args.seed,
    }
    header = (
        "model",
        "method",
        "images",
        "skipped",
        "rot_rmse_deg",
        "pos_rmse",
        "mean_reproj_px",
        "failures",
    )
    detail_rows = []
    rows = []
    for model_dir in args.model_dir:
        model = parse_model(model_dir)
        problems, skipped = build_problems(model, min_points=args.min_points)
        rng = np.random.default_rng(args.seed)
        noisy = []
        for prob in problems:
            cs = prob.correspondences
            if args.noise_px > 0.0:
                us = np.array([c.u for c in cs])
                us = us + args.noise_px * rng.standard_normal(us.shape)
                cs = [Correspondence(p=c.p, u=u) for c, u in zip(cs, us)]
            noisy.append(cs)
        for method in args.methods:
            cfg = SolverConfig(method=method, sigma_u=max(args.noise_px, 1.0), seed=args.seed)
            rot_sq = []
            pos_sq = []
            reproj = []
            failures = 0
            for prob, cs in zip(problems, noisy):
                try:
                    result = solve(cs, prob.intrinsics, cfg)
                except (PnpError, np.linalg.LinAlgError):
                    failures += 1
                    if args.per_image:
                        detail_rows.append(
                            (str(model_dir), method, prob.name, "", "", "", "failed")
                        )
                    continue
                metrics = compute_metrics(result, prob.truth, cs, prob.intrinsics)
                rot_sq.append(metrics.rot_err_deg**2)
                pos_sq.append(metrics.pos_err**2)
                reproj.append(metrics.mean_reproj_err)
                if args.per_image:
                    detail_rows.append(
                        (
                            str(model_dir),
                            method,
                            prob.name,
                            _fmt(metrics.rot_err_deg),
                            _fmt(metrics.pos_err),
                            _fmt(metrics.mean_reproj_err),
                            "ok",
                        )
                    )
            rows.append(
                (
                    str(model_dir),
                    method,
                    str(len(problems)),
                    str(skipped),
                    _fmt(float(np.sqrt(np.mean(rot_sq)))) if rot_sq else "",
                    _fmt(float(np.sqrt(np.mean(pos_sq)))) if pos_sq else "",
                    _fmt(float(np.mean(reproj))) if reproj else "",
                    str(failures),
                )
            )
    _write_csv(args.out, _manifest_lines(args, config), header, rows)
    if args.per_image:
        detail_header = ("model", "method", "image", "rot_err_deg", "pos_err", "mean_reproj_px", "status")
        _write_csv(args.per_image, _manifest_lines(args, config), detail_header, detail_rows)
    return 0


def _read_problem(path):
    """Read a single-problem text file.

    Line 1: fx fy cx cy [skew]; following lines: px py X Y Z. Blank lines
    and '#' comments are ignored.
    """
    stream = sys.stdin if path == "-" else open(path, "r")
    try:
        lines = []
        for raw in stream:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            lines.append(line)
    finally:
        if stream is not sys.stdin:
            stream.close()
    if not lines:
        raise ValueError(f"{path}: empty problem file")
    head = [float(tok) for tok in lines[0].split()]
    if len(head) not in (4, 5):
        raise ValueError(f"{path}: intrinsics line needs 4 or 5 numbers, got {len(head)}")
    skew = head[4] if len(head) == 5 else 0.0
    intr = CameraIntrinsics(fx=head[0], fy=head[1], cx=head[2], cy=head[3], skew=skew)
    cs = []
    for line in lines[1:]:
        vals = [float(tok) for tok in line.split()]
        if len(vals) != 5:
            raise ValueError(f"{path}: correspondence line needs 5 numbers, got {len(vals)}")
        cs.append(Correspondence(p=np.array(vals[2:]), u=np.array(vals[:2])))
    return intr, cs


def _cmd_solve(args: argparse.Namespace) -> int:
    intr, cs = _read_problem(args.input)
    cfg = SolverConfig(method=args.method, sigma_u=args.sigma_u, seed=args.seed)
    result = solve(cs, intr, cfg)
    pose = result.pose
    if args.format == "json-lines":
        payload = {
            "method": args.method,
            "R": [[float(v) for v in row] for row in pose.R],
            "r": [float(v) for v in pose.r],
            "reprojection_rms": float(result.reprojection_rms),
            "flags": sorted(result.flags),
        }
        print(json.dumps(payload, sort_keys=True))
        return 0
    print(f"method: {args.method}")
    print("rotation (world to camera):")
    for row in pose.R:
        print("  " + " ".join(_fmt(v) for v in row))
    print("camera center (world): " + " ".join(_fmt(v) for v in pose.r))
    print(f"reprojection rms (px): {_fmt(result.reprojection_rms)}")
    if result.flags:
        print("flags: " + ", ".join(sorted(result.flags)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odlt", description="Camera pose estimation from 2D-3D correspondences."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthetic", help="run the synthetic benchmark grid")
    p_syn.add_argument(
        "--scenario", choices=sorted(_SCENARIO_BOXES), default="centered",
        help="point cloud placement (default: centered)",
    )
    p_syn.add_argument(
        "--n-list", type=_int_list, default=[50],
        help="comma separated point counts (default: 50)",
    )
    p_syn.add_argument(
        "--sigma-list", type=_float_list, default=[1.0],
        help="comma separated pixel noise levels (default: 1.0)",
    )
    p_syn.add_argument("--trials", type=int, default=500, help="trials per cell (default: 500)")
    p_syn.add_argument("--seed", type=int, default=0, help="base seed (default: 0)")
    p_syn.add_argument(
        "--methods", type=_method_list, default=list(METHODS),
        help="comma separated methods (default: all)",
    )
    p_syn.add_argument("--out", default="-", help="output CSV path, - for stdout (default: -)")
    p_syn.add_argument(
        "--no-timing", action="store_true",
        help="skip runtime measurement so rows are byte-identical across hosts",
    )
    p_syn.add_argument(
        "--timing-reps", type=int, default=1,
        help="repetitions per trial for timing, median kept (default: 1)",
    )
    p_syn.add_argument(
        "--workers", type=int, default=None,
        help="worker processes; timing runs force 1 (default: ODLT_THREADS or 1)",
    )
    p_syn.set_defaults(func=_cmd_synthetic)

    p_col = sub.add_parser("eval-colmap", help="evaluate against COLMAP text models")
    p_col.add_argument(
        "--model-dir", action="append", required=True,
        help="model directory with cameras.txt/images.txt/points3D.txt (repeatable)",
    )
    p_col.add_argument(
        "--methods", type=_method_list, default=list(METHODS),
        help="comma separated methods (default: all)",
    )
    p_col.add_argument(
        "--min-points", type=int, default=6,
        help="skip images with fewer usable observations (default: 6)",
    )
    p_col.add_argument(
        "--noise-px", type=float, default=0.0,
        help="extra Gaussian pixel noise added to observations (default: 0)",
    )
    p_col.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p_col.add_argument("--out", default="-", help="output CSV path, - for stdout (default: -)")
    p_col.add_argument("--per-image", default=None, help="also write per-image rows to this CSV")
    p_col.set_defaults(func=_cmd_eval_colmap)

    p_solve = sub.add_parser("solve", help="solve one problem from a text file")
    p_solve.add_argument(
        "--input", required=True,
        help="problem file: 'fx fy cx cy [skew]' then 'px py X Y Z' lines, - for stdin",
    )
    p_solve.add_argument(
        "--method", choices=METHODS, default="odlt", help="solver (default: odlt)"
    )
    p_solve.add_argument(
        "--sigma-u", type=float, default=1.0, help="pixel noise scale (default: 1.0)"
    )
    p_solve.add_argument("--seed", type=int, default=0, help="subset seed (default: 0)")
    p_solve.add_argument(
        "--format", choices=("text", "json-lines"), default="text",
        help="output format (default: text)",
    )
    p_solve.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is None and args.command == "synthetic":
        args.workers = default_workers()
    try:
        return args.func(args)
    except (PnpError, ColmapParseError, np.linalg.LinAlgError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
