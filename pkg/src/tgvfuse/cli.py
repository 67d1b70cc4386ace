"""Command-line front end: synth | fuse | eval.

Every run writes a manifest.json next to its outputs recording the
resolved configuration, input/output paths, seed, solver verdict, and
timings; re-running the same command reproduces the outputs bitwise
(all kernels are deterministic single-threaded array code, so
--threads 1 is both the default behavior and a guarantee).

Flags override config-file keys (--config, sections [model] [solver]
[scene]; key list in docs/config.md). Exit codes: 0 success, 2 usage
error, 3 solver diverged (trace and manifest are still written), 1
other errors.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .energy import ModelParams
from .fileio import (
    read_config,
    read_intrinsics,
    read_pfm,
    read_poses,
    write_intrinsics,
    write_pfm,
    write_poses,
)
from .geometry import (
    CameraIntrinsics,
    edge_confidence,
    geometric_confidence,
    hyperparams_from_priors,
)
from .metrics import aggregate, baseline_fuse, evaluate
from .solvers import DIVERGED, SolverConfig, acs, ama, pdhg_biconvex, \
    pdhg_fixed
from .synth import (
    NoiseSpec,
    camera_path,
    depth_to_disparity,
    identity_bundle,
    make_boxes_scene,
    reproject_bundle,
    warped_views,
)

METHODS = ("mean", "median", "rof", "l1", "tgv-fusion", "l1-heuristic",
           "rof-adapt", "l1-adapt", "adapt-hprior", "adapt-hprior+g")
BASELINE_METHODS = ("mean", "median")
FIXED_METHODS = ("rof", "l1", "tgv-fusion", "l1-heuristic")
ADAPTIVE_METHODS = ("rof-adapt", "l1-adapt", "adapt-hprior",
                    "adapt-hprior+g")
SOLVERS = ("acs", "ama", "pdhg")


class UsageError(Exception):
    pass


def _cfg_get(cfg, section, key, fallback=None):
    return cfg.get(section, {}).get(key, fallback)


def build_parser(cfg):
    parser = argparse.ArgumentParser(
        prog="tgvfuse",
        description="Confidence-adaptive TGV fusion of depth images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file ([model] [solver] "
                                        "[scene] sections); flags override")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int,
                       default=int(_cfg_get(cfg, "scene", "seed", 0)),
                       help="seed for noise and solver randomness")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads inside kernels; 1 (the "
                            "default and only implemented mode) "
                            "guarantees bitwise reproducibility")

    p_synth = sub.add_parser("synth", help="generate a synthetic bundle")
    common(p_synth)
    p_synth.add_argument("--scene",
                         default=_cfg_get(cfg, "scene", "kind", "boxes"),
                         choices=("boxes", "orbit", "translation"))
    p_synth.add_argument("--width", type=int,
                         default=int(_cfg_get(cfg, "scene", "width", 128)))
    p_synth.add_argument("--height", type=int,
                         default=int(_cfg_get(cfg, "scene", "height", 128)))
    p_synth.add_argument("-k", "--views", type=int,
                         default=int(_cfg_get(cfg, "scene", "k", 11)),
                         help="number of depth observations")
    p_synth.add_argument("--noise",
                         default=_cfg_get(cfg, "scene", "noise", "laplace"),
                         choices=("laplace", "gaussian"))
    p_synth.add_argument("--noise-scale", type=float,
                         default=float(_cfg_get(cfg, "scene", "noise_scale",
                                                0.6)))
    p_synth.add_argument("--spacing", type=float,
                         default=float(_cfg_get(cfg, "scene", "spacing",
                                                4.0)),
                         help="translation path step in model units")
    p_synth.add_argument("--background", type=float,
                         default=float(_cfg_get(cfg, "scene", "background",
                                                3.0)))
    p_synth.add_argument("--box-sizes",
                         default=_cfg_get(cfg, "scene", "box_sizes",
                                          "8,16,32,64"),
                         help="comma-separated box side lengths")
    p_synth.add_argument("--box-depths",
                         default=_cfg_get(cfg, "scene", "box_depths",
                                          "4.0,2.0,4.5,2.5"),
                         help="comma-separated box depths")
    p_synth.add_argument("--focal", type=float, default=None,
                         help="focal length in pixels (default scales "
                              "576 px at 640 width to the grid)")
    p_synth.set_defaults(func=cmd_synth)

    p_fuse = sub.add_parser("fuse", help="fuse a bundle into its "
                                         "reference view")
    common(p_fuse)
    p_fuse.add_argument("--bundle", required=True,
                        help="bundle directory from 'synth' (view_*.pfm, "
                             "poses.txt, intrinsics.txt)")
    p_fuse.add_argument("--method", choices=METHODS,
                        default=_cfg_get(cfg, "model", "method",
                                         "adapt-hprior"))
    p_fuse.add_argument("--solver", choices=SOLVERS,
                        default=_cfg_get(cfg, "solver", "name", None),
                        help="acs | ama | pdhg (adaptive methods; fixed-"
                             "confidence methods always run pdhg)")
    p_fuse.add_argument("--ref", type=int, default=None,
                        help="reference view index (default: middle)")
    p_fuse.add_argument("--iters", type=int,
                        default=int(_cfg_get(cfg, "solver", "iters", 60)),
                        help="outer iterations (alternating solvers) or "
                             "total iterations (pdhg)")
    p_fuse.add_argument("--inner-iters", type=int,
                        default=int(_cfg_get(cfg, "solver", "inner_iters",
                                             50)))
    p_fuse.add_argument("--alpha1", type=float,
                        default=float(_cfg_get(cfg, "model", "alpha1", 0.5)))
    p_fuse.add_argument("--alpha0", type=float,
                        default=float(_cfg_get(cfg, "model", "alpha0", 1.0)))
    p_fuse.add_argument("--b", type=float,
                        default=float(_cfg_get(cfg, "model", "b", 1.0)),
                        help="confidence prior strength")
    p_fuse.add_argument("--w", type=float,
                        default=float(_cfg_get(cfg, "model", "w", 0.5)),
                        help="uniform confidence prior weight (ignored "
                             "when a heuristic prior supplies it)")
    p_fuse.add_argument("--tau", type=float,
                        default=_cfg_get(cfg, "solver", "tau", None),
                        help="primal step (default 0.05 x depth range)")
    p_fuse.add_argument("--confidence", type=float,
                        default=float(_cfg_get(cfg, "model", "confidence",
                                               1.0)),
                        help="uniform confidence value for the fixed-"
                             "confidence methods")
    p_fuse.add_argument("--intensity", default=None,
                        help="intensity image (PFM) for the appearance "
                             "prior; defaults to <bundle>/intensity.pfm")
    p_fuse.set_defaults(func=cmd_fuse)

    p_eval = sub.add_parser("eval", help="compare fused fields against "
                                         "ground truth")
    common(p_eval)
    p_eval.add_argument("--gt", required=True, help="ground-truth PFM")
    p_eval.add_argument("inputs", nargs="+", help="fused PFM files")
    p_eval.add_argument("--intrinsics", default=None,
                        help="intrinsics file enabling the normal-angle "
                             "metric")
    p_eval.add_argument("--baseline", type=float, default=None,
                        help="virtual stereo baseline enabling disparity "
                             "metrics")
    p_eval.add_argument("--thresholds", default="3",
                        help="comma-separated disparity out-n thresholds")
    p_eval.add_argument("--agg", choices=("geometric", "arithmetic"),
                        default="geometric",
                        help="aggregate-row averaging (labeled in output)")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def _parse_floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _default_intrinsics(width, height, focal=None):
    f = focal if focal is not None else 576.0 * width / 640.0
    return CameraIntrinsics(f, width / 2.0, height / 2.0)


def _write_manifest(out_dir, payload):
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def cmd_synth(args):
    t_start = time.perf_counter()
    if args.views < 1:
        raise UsageError("need at least one view (-k)")
    sizes = tuple(int(s) for s in str(args.box_sizes).split(",") if s.strip())
    depths = _parse_floats(args.box_depths)
    if len(sizes) != len(depths):
        raise UsageError("--box-sizes and --box-depths differ in length")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    intr = _default_intrinsics(args.width, args.height, args.focal)
    gt = make_boxes_scene(args.height, args.width, sizes, depths,
                          args.background)
    noise = NoiseSpec(args.noise, args.noise_scale, args.seed)

    if args.scene == "boxes":
        poses = [camera_path("translation", 1, spacing=0.0)[0]
                 for _ in range(args.views)]
        ref = args.views // 2
        bundle = identity_bundle(gt, args.views, noise)
        views = [(bundle.depths[i], bundle.valid[i])
                 for i in range(args.views)]
    else:
        if args.scene == "orbit":
            poses = camera_path("orbit", args.views)
        else:
            poses = camera_path("translation", args.views,
                                spacing=args.spacing)
        ref = args.views // 2
        views = warped_views(gt, poses, intr, ref, noise)

    outputs = []
    for i, (d, valid) in enumerate(views):
        path = out / f"view_{i:03d}.pfm"
        write_pfm(path, np.where(valid, d, np.nan))
        outputs.append(str(path))
    write_pfm(out / "gt.pfm", gt)
    lo, hi = float(gt.min()), float(gt.max())
    intensity = (gt - lo) / (hi - lo) if hi > lo else np.zeros_like(gt)
    write_pfm(out / "intensity.pfm", intensity)
    write_poses(out / "poses.txt", poses)
    write_intrinsics(out / "intrinsics.txt", intr)
    outputs += [str(out / n) for n in
                ("gt.pfm", "intensity.pfm", "poses.txt", "intrinsics.txt")]

    _write_manifest(out, {
        "command": "synth",
        "config": {
            "scene": args.scene, "width": args.width, "height": args.height,
            "k": args.views, "noise": args.noise,
            "noise_scale": args.noise_scale, "spacing": args.spacing,
            "background": args.background, "box_sizes": list(sizes),
            "box_depths": list(depths), "ref": ref,
            "intrinsics": [intr.f, intr.cu, intr.cv],
        },
        "inputs": [],
        "outputs": outputs,
        "seed": args.seed,
        "verdict": "n/a",
        "timings": {"total_seconds": time.perf_counter() - t_start},
    })
    return 0


def _load_bundle(bundle_dir):
    bundle_dir = Path(bundle_dir)
    view_paths = sorted(bundle_dir.glob("view_*.pfm"))
    if not view_paths:
        raise UsageError(f"no view_*.pfm files in {bundle_dir}")
    poses_path = bundle_dir / "poses.txt"
    intr_path = bundle_dir / "intrinsics.txt"
    if not poses_path.exists() or not intr_path.exists():
        raise UsageError("bundle must contain poses.txt and intrinsics.txt")
    views = []
    for p in view_paths:
        d = read_pfm(p).astype(np.float64)
        views.append((d, np.isfinite(d)))
    poses = read_poses(poses_path)
    if len(poses) != len(views):
        raise UsageError("pose count does not match view count")
    return views, poses, read_intrinsics(intr_path), [str(p) for p in
                                                      view_paths]


def _fill_holes(field, valid):
    if valid.all():
        return field
    fill = float(np.mean(field[valid])) if valid.any() else 0.0
    return np.where(valid, field, fill)


def _resolve_method(args, bundle, intr):
    """Build (params, solver callable, lam description) for the method."""
    method = args.method
    solver_name = args.solver
    if method in BASELINE_METHODS:
        if solver_name is not None:
            raise UsageError(f"method {method!r} takes no solver")
        return None
    if method in FIXED_METHODS:
        if solver_name not in (None, "pdhg"):
            raise UsageError(
                f"method {method!r} has fixed confidence; only the pdhg "
                f"solver applies (got {solver_name!r})"
            )
        solver_name = "pdhg-fixed"
    else:
        solver_name = solver_name or "acs"

    regularizer = "tv" if method in ("rof", "l1") else "tgv"
    fidelity = "l2" if method in ("rof", "rof-adapt") else "l1"

    w_field = args.w
    b = args.b
    if method in ("adapt-hprior", "adapt-hprior+g"):
        med, valid = baseline_fuse(bundle, "median")
        med = _fill_holes(med, valid)
        priors = [geometric_confidence(med, intr)]
        if method == "adapt-hprior+g":
            inten_path = args.intensity or str(
                Path(args.bundle) / "intensity.pfm")
            if not Path(inten_path).exists():
                raise UsageError(
                    "adapt-hprior+g needs an intensity image "
                    "(--intensity or <bundle>/intensity.pfm)"
                )
            priors.append(edge_confidence(read_pfm(inten_path)))
        w_field, b = hyperparams_from_priors(priors, b0=args.b)

    params = ModelParams(alpha1=args.alpha1, alpha0=args.alpha0, b=b,
                         w=w_field)

    lam_fixed = None
    if method in FIXED_METHODS:
        h, w = bundle.grid_shape
        if method == "l1-heuristic":
            confs = []
            for i in range(bundle.k):
                d = np.where(bundle.valid[i], bundle.depths[i], np.nan)
                confs.append(geometric_confidence(d, intr))
            lam_fixed = args.confidence * np.stack(confs)
        else:
            lam_fixed = np.full((h, w), args.confidence)

    return {
        "params": params,
        "solver": solver_name,
        "regularizer": regularizer,
        "fidelity": fidelity,
        "lam_fixed": lam_fixed,
    }


def cmd_fuse(args):
    t_start = time.perf_counter()
    views, poses, intr, input_paths = _load_bundle(args.bundle)
    k = len(views)
    ref = args.ref if args.ref is not None else k // 2
    if not 0 <= ref < k:
        raise UsageError(f"--ref {ref} out of range for {k} views")

    bundle = reproject_bundle(views, poses, intr, ref)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    verdict = "n/a"

    if args.method in BASELINE_METHODS:
        if args.solver is not None:
            raise UsageError(f"method {args.method!r} takes no solver")
        fused, valid = baseline_fuse(bundle, args.method)
        fused = np.where(valid, fused, np.nan)
        lam = None
        trace = None
    else:
        plan = _resolve_method(args, bundle, intr)
        config = SolverConfig(
            iters=args.iters, inner_iters=args.inner_iters,
            tau=args.tau, regularizer=plan["regularizer"],
            fidelity=plan["fidelity"], seed=args.seed,
        )
        t_solve = time.perf_counter()
        if plan["solver"] == "pdhg-fixed":
            primal, dual, trace = pdhg_fixed(bundle, plan["lam_fixed"],
                                             plan["params"], config)
            lam = plan["lam_fixed"]
            if lam.ndim == 3:
                lam = lam.mean(axis=0)
        elif plan["solver"] == "acs":
            primal, lam, trace = acs(bundle, plan["params"], config)
        elif plan["solver"] == "ama":
            primal, lam, trace = ama(bundle, plan["params"], config)
        else:
            primal, lam, _, trace = pdhg_biconvex(bundle, plan["params"],
                                                  config)
        fused = primal.x
        verdict = trace.verdict
        solve_seconds = time.perf_counter() - t_solve

    fused_path = out / "fused.pfm"
    write_pfm(fused_path, fused)
    outputs.append(str(fused_path))
    if args.method not in BASELINE_METHODS:
        lam_path = out / "lambda.pfm"
        write_pfm(lam_path, lam)
        outputs.append(str(lam_path))
        trace_path = out / "trace.csv"
        trace.write_csv(trace_path)
        outputs.append(str(trace_path))
    else:
        solve_seconds = 0.0

    _write_manifest(out, {
        "command": "fuse",
        "config": {
            "method": args.method, "solver": args.solver, "ref": ref,
            "iters": args.iters, "inner_iters": args.inner_iters,
            "alpha1": args.alpha1, "alpha0": args.alpha0, "b": args.b,
            "w": args.w, "tau": args.tau, "confidence": args.confidence,
        },
        "inputs": input_paths,
        "outputs": outputs,
        "seed": args.seed,
        "verdict": verdict,
        "timings": {
            "total_seconds": time.perf_counter() - t_start,
            "solve_seconds": solve_seconds,
        },
    })
    return 3 if verdict == DIVERGED else 0


def cmd_eval(args):
    t_start = time.perf_counter()
    gt = read_pfm(args.gt).astype(np.float64)
    thresholds = tuple(int(t) for t in str(args.thresholds).split(",")
                       if t.strip())
    intr = read_intrinsics(args.intrinsics) if args.intrinsics else None

    from .geometry import normal_map

    def to_disparity(d):
        # nonpositive depths (possible in raw noisy views) carry no
        # disparity; they drop out of the disparity metrics
        return depth_to_disparity(np.where(d > 0, d, np.nan), intr.f,
                                  args.baseline)

    normals_gt = normal_map(gt, intr) if intr is not None else None
    disp_gt = (to_disparity(gt)
               if intr is not None and args.baseline else None)

    reports = []
    names = []
    for path in args.inputs:
        x = read_pfm(path).astype(np.float64)
        if x.shape != gt.shape:
            raise ValueError(
                f"{path}: grid {x.shape} does not match ground truth "
                f"{gt.shape}"
            )
        normals_x = normal_map(x, intr) if intr is not None else None
        disp_pair = None
        if disp_gt is not None:
            disp_pair = (to_disparity(x), disp_gt)
        reports.append(evaluate(x, gt, normals_x, normals_gt, disp_pair,
                                thresholds))
        names.append(path)

    rows = [r.as_row(thresholds) for r in reports]
    if len(reports) > 1:
        rows.append(aggregate(reports, how=args.agg).as_row(thresholds))
        names.append(f"aggregate-{args.agg}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "metrics.csv"
    cols = list(rows[0].keys())
    with open(csv_path, "w") as f:
        f.write("name," + ",".join(cols) + "\n")
        for name, row in zip(names, rows):
            cells = ["" if row[c] is None else f"{row[c]:.6g}" for c in cols]
            f.write(name + "," + ",".join(cells) + "\n")
    sys.stdout.write(csv_path.read_text())

    _write_manifest(out, {
        "command": "eval",
        "config": {"gt": args.gt, "thresholds": list(thresholds),
                   "agg": args.agg, "baseline": args.baseline,
                   "intrinsics": args.intrinsics},
        "inputs": [args.gt] + list(args.inputs),
        "outputs": [str(csv_path)],
        "seed": args.seed,
        "verdict": "n/a",
        "timings": {"total_seconds": time.perf_counter() - t_start},
    })
    return 0


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        cfg = read_config(known.config) if known.config else {}
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser = build_parser(cfg)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
