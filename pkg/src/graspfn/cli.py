"""Command-line entry point: generate / train / plan / evaluate / render.

Exit codes: 0 success, 2 configuration or parse error, 3 I/O error,
4 training error, 5 content error.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import GRID_PRESETS, RunConfig, load_config
from .depth_render import read_pgm, render_depth, apply_noise, inpaint_zeros, write_pgm
from .errors import ConfigurationError, ContentError, GraspfnError, TrainingError
from .grasp_function import (
    UncertaintyModel,
    export_heatmaps,
    interpolate,
    load_grasp_function,
    save_grasp_function,
    smooth,
)
from .grasp_oracle import compute_grasp_function
from .planner_eval import (
    EvalConfig,
    argmax_continuous,
    derive_seed,
    result_to_csv,
    run_sweep,
    slice_to_csv,
    summary_table,
    _STREAM_JITTER,
    _STREAM_NOISE,
    _STREAM_PLACE,
)
from .predictor import (
    TrainingExample,
    load_model,
    predict_grasp_function,
    save_model,
    train,
)
from .scene import generate_object, load_scene, place_object, save_scene

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRAIN = 4
EXIT_CONTENT = 5

_EPILOG = """exit codes:
  0  success
  2  configuration / parse error
  3  I/O error
  4  training error (divergence)
  5  content error (empty mask, all-zero image)
"""


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "grid_preset", None):
        cfg = dataclasses.replace(cfg, grid=GRID_PRESETS[args.grid_preset]())
        cfg.train = dataclasses.replace(cfg.train, grid=cfg.grid)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg


def _object_paths(out_dir: str, index: int) -> dict:
    stem = os.path.join(out_dir, f"obj_{index:05d}")
    return {
        "scene": stem + "_scene.json",
        "depth": stem + "_depth.pgm",
        "noisy": stem + "_noisy.pgm",
        "grasp": stem + "_grasp.json",
    }


def _skip_marker(out_dir: str, index: int) -> str:
    return os.path.join(out_dir, f"obj_{index:05d}_skipped.json")


def _generate_one(cfg: RunConfig, out_dir: str, index: int):
    """Returns elapsed seconds, or the skip reason for unplaceable objects."""
    paths = _object_paths(out_dir, index)
    t0 = time.perf_counter()
    obj = generate_object(index)
    try:
        scene = place_object(obj, derive_seed(cfg.master_seed, _STREAM_PLACE, index),
                             cfg.grid, cfg.plane_z_mm, cfg.camera_height_mm)
    except ConfigurationError as err:
        import json

        with open(_skip_marker(out_dir, index), "w") as fh:
            json.dump({"seed": index, "reason": str(err)}, fh, indent=2)
            fh.write("\n")
        return str(err)
    img = render_depth(scene, cfg.grid)
    noisy = apply_noise(img, cfg.noise, derive_seed(cfg.master_seed, _STREAM_NOISE, index))
    f = compute_grasp_function(scene, cfg.gripper, cfg.grid,
                               derive_seed(cfg.master_seed, _STREAM_JITTER, index))
    save_scene(scene, paths["scene"])
    write_pgm(img, paths["depth"])
    write_pgm(noisy, paths["noisy"])
    save_grasp_function(f, paths["grasp"])
    return time.perf_counter() - t0


def cmd_generate(args) -> int:
    cfg = _load_run_config(args)
    os.makedirs(args.out, exist_ok=True)
    pending = []
    for k in range(args.count):
        paths = _object_paths(args.out, k)
        if all(os.path.exists(p) for p in paths.values()) or os.path.exists(
                _skip_marker(args.out, k)):
            print(f"object {k:05d}: exists, skipped")
        else:
            pending.append(k)

    def report(k, res):
        if isinstance(res, str):
            print(f"object {k:05d}: not placeable ({res})")
        else:
            print(f"object {k:05d}: generated in {res:.2f} s")

    if args.jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for k, res in zip(pending, pool.map(_generate_one, [cfg] * len(pending),
                                                [args.out] * len(pending), pending)):
                report(k, res)
    else:
        for k in pending:
            report(k, _generate_one(cfg, args.out, k))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    if not os.path.isdir(args.dataset):
        raise FileNotFoundError(f"dataset directory not found: {args.dataset}")
    examples = []
    for name in sorted(os.listdir(args.dataset)):
        if not name.endswith("_noisy.pgm"):
            continue
        grasp_path = os.path.join(args.dataset, name.replace("_noisy.pgm", "_grasp.json"))
        if not os.path.exists(grasp_path):
            continue
        img = read_pgm(os.path.join(args.dataset, name), cfg.grid.px_per_mm)
        f = load_grasp_function(grasp_path)
        labels = np.rint(f.scores * 5).astype(np.int64)
        examples.append(TrainingExample(img, labels))
    if not examples:
        raise FileNotFoundError(f"no dataset objects found under {args.dataset}")
    print(f"training on {len(examples)} objects, {cfg.train.steps} steps")
    result = train(examples, cfg.train)
    save_model(result.model, args.out)
    base, _ = os.path.splitext(args.out)
    loss_path = base + "_loss.csv"
    with open(loss_path, "w") as fh:
        fh.write("step,loss\n")
        for step, val in result.loss_curve:
            fh.write(f"{step},{val!r}\n")
    print(f"model written to {args.out}; loss curve to {loss_path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load_run_config(args)
    sigma_uv = cfg.uncertainty.sigma_uv if args.sigma_uv is None else args.sigma_uv
    sigma_theta = (cfg.uncertainty.sigma_theta if args.sigma_theta is None
                   else math.radians(args.sigma_theta))
    unc = UncertaintyModel(sigma_uv=sigma_uv, sigma_theta=sigma_theta)

    if args.source == "oracle":
        if not args.scene:
            raise ConfigurationError("--source oracle requires --scene")
        scene = load_scene(args.scene)
        f = compute_grasp_function(scene, cfg.gripper, cfg.grid,
                                   derive_seed(cfg.master_seed, _STREAM_JITTER, 0))
    else:
        if not (args.image and args.model):
            raise ConfigurationError("--source predictor requires --image and --model")
        model = load_model(args.model)
        img = read_pgm(args.image, cfg.grid.px_per_mm)
        if (img.data == 0).any():
            img = inpaint_zeros(img, cfg.inpaint_radius_px)
        f = predict_grasp_function(model, img)

    smoothed = smooth(f, unc)
    pose = argmax_continuous(smoothed, cfg.refine)
    score = interpolate(smoothed, pose)
    method = "best_grasp" if unc.is_zero() else "robust_best_grasp"
    doc = {
        "method": method,
        "pose": {"u_mm": pose.u, "v_mm": pose.v, "theta_rad": pose.theta},
        "score": score,
    }
    import json

    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    if args.heatmaps:
        os.makedirs(args.heatmaps, exist_ok=True)
        export_heatmaps(smoothed, args.heatmaps)
    print(f"planned {method}: u={pose.u:.1f} mm v={pose.v:.1f} mm "
          f"theta={pose.theta:.3f} rad score={score:.3f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    model = None
    if cfg.eval.source == "predictor":
        if not cfg.eval.model_path:
            raise ConfigurationError("eval.source=predictor requires eval.model_path")
        model = load_model(cfg.eval.model_path)
    eval_cfg = EvalConfig(
        object_seeds=cfg.eval.seeds(),
        sigma_uv_mm=cfg.eval.sigma_uv_mm,
        sigma_theta_deg=cfg.eval.sigma_theta_deg,
        trials=cfg.eval.trials,
        methods=cfg.eval.methods,
        source=cfg.eval.source,
        master_seed=cfg.master_seed,
        grid=cfg.grid,
        gripper=cfg.gripper,
        noise=cfg.noise,
        plane_z_mm=cfg.plane_z_mm,
        camera_height_mm=cfg.camera_height_mm,
        inpaint_radius_px=cfg.inpaint_radius_px,
        refine=cfg.refine,
        model=model,
    )
    result = run_sweep(eval_cfg, jobs=args.jobs)
    with open(args.out, "w") as fh:
        fh.write(result_to_csv(result))
    base, ext = os.path.splitext(args.out)
    slice_path = base + "_slice" + (ext or ".csv")
    with open(slice_path, "w") as fh:
        fh.write(slice_to_csv(result, eval_cfg.sigma_theta_deg[0]))
    print(summary_table(result))
    print(f"results written to {args.out}; slice to {slice_path}")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _load_run_config(args)
    scene = load_scene(args.scene)
    img = render_depth(scene, cfg.grid)
    write_pgm(img, args.out)
    print(f"rendered {img.width}x{img.height} depth image to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspfn",
        description="Grasp-function learning and planning under gripper pose uncertainty",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--grid-preset", choices=sorted(GRID_PRESETS),
                       help="override the pose grid preset")

    p = sub.add_parser("generate", help="synthesize a training/eval dataset")
    common(p)
    p.add_argument("--count", type=int, required=True, help="number of objects")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the score predictor on a dataset")
    common(p)
    p.add_argument("--dataset", required=True, help="directory from 'generate'")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="plan a grasp for one scene or image")
    common(p)
    p.add_argument("--source", choices=("oracle", "predictor"), default="oracle")
    p.add_argument("--scene", help="scene JSON (oracle source)")
    p.add_argument("--image", help="depth PGM (predictor source)")
    p.add_argument("--model", help="model file (predictor source)")
    p.add_argument("--sigma-uv", type=float, help="pose std in mm")
    p.add_argument("--sigma-theta", type=float, help="pose std in degrees")
    p.add_argument("--out", required=True, help="output pose JSON")
    p.add_argument("--heatmaps", help="directory for per-slab heatmap PGMs")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", help="run the Monte-Carlo robustness sweep")
    common(p)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render a scene JSON to a depth PGM")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_TRAIN
    except ContentError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONTENT
    except (ConfigurationError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except GraspfnError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
