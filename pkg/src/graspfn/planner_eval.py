"""Grasp planners and the Monte-Carlo robustness sweep.

Three planners: Centroid (image-mask centroid, gripper across the PCA
dominant direction), Best Grasp (continuous argmax of the raw grasp
function), and Robust Best Grasp (argmax of the uncertainty-smoothed
function).  The sweep plans once per object and setting, samples achieved
poses from the uncertainty model, and judges each trial with a single
quasi-static grasp attempt at the achieved pose.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .depth_render import DepthImage, NoiseParams, apply_noise, render_depth
from .depth_render import inpaint_zeros
from .errors import ConfigurationError, ContentError
from .grasp_function import (
    GraspFunction,
    UncertaintyModel,
    argmax_continuous,
    smooth,
)
from .grasp_oracle import GripperSpec, attempt_grasp_many, compute_grasp_function
from .pose_grid import Pose, PoseGrid, desk_grid
from .scene import generate_object, place_object

METHODS = ("centroid", "best", "robust")

# named sub-stream ids hung off the master seed
_STREAM_PLACE = 1
_STREAM_NOISE = 2
_STREAM_JITTER = 3
_STREAM_TRAIN = 4
_STREAM_EXEC = 5


def derive_seed(master_seed: int, stream: int, *keys: int) -> int:
    """Stable integer seed for a named sub-stream of the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(stream), *map(int, keys)])
    return int(ss.generate_state(1)[0])


def centroid_plan(img: DepthImage, grid: PoseGrid,
                  plane_z: float | None = None) -> Pose:
    """Grasp at the foreground-mask centroid, closing across the dominant
    direction of the mask (PCA); isotropic masks fall back to theta = 0.

    Foreground pixels sit more than 5 mm above the plane depth (given, or
    estimated as the image median).
    """
    plane = float(np.median(img.data)) if plane_z is None else float(plane_z)
    mask = img.data < plane - 5.0
    if not mask.any():
        raise ContentError("no foreground pixels above the plane")
    iy, ix = np.nonzero(mask)
    pu = img.pixel_u()[ix]
    pv = img.pixel_v()[iy]
    cu = float(pu.mean())
    cv = float(pv.mean())
    du = pu - cu
    dv = pv - cv
    cov = np.array([[np.mean(du * du), np.mean(du * dv)],
                    [np.mean(du * dv), np.mean(dv * dv)]])
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] <= 0 or (evals[1] - evals[0]) <= 1e-6 * evals[1]:
        theta = 0.0
    else:
        principal = evecs[:, 1]
        theta = math.atan2(principal[1], principal[0]) + math.pi / 2
    return Pose(cu, cv, theta)


def best_grasp_plan(f: GraspFunction, refine: int = 10) -> Pose:
    """Continuous argmax of the raw (unsmoothed) grasp function."""
    return argmax_continuous(f, refine)


def robust_best_grasp_plan(f: GraspFunction, unc: UncertaintyModel,
                           refine: int = 10) -> Pose:
    """Continuous argmax of the uncertainty-smoothed grasp function."""
    return argmax_continuous(smooth(f, unc), refine)


def sample_achieved_pose(target: Pose, unc: UncertaintyModel, seed: int) -> Pose:
    """Gaussian perturbation of the commanded pose; theta re-reduced mod pi."""
    rng = np.random.default_rng(seed)
    if unc.cov_uv is not None:
        evals, evecs = np.linalg.eigh(unc.cov_uv)
        root = evecs @ np.diag(np.sqrt(np.maximum(evals, 0.0)))
        duv = root @ rng.standard_normal(2)
    else:
        duv = rng.normal(0.0, unc.sigma_uv, 2)
    dth = rng.normal(0.0, unc.sigma_theta)
    return Pose(target.u + duv[0], target.v + duv[1], target.theta + dth)


@dataclass(frozen=True)
class EvalConfig:
    """One Table-style sweep: objects x uncertainty settings x methods."""

    object_seeds: tuple
    sigma_uv_mm: tuple = (5.0, 10.0, 15.0, 20.0)
    sigma_theta_deg: tuple = (10.0, 20.0, 30.0, 40.0)
    trials: int = 20
    methods: tuple = METHODS
    source: str = "oracle"  # or "predictor"
    master_seed: int = 0
    grid: PoseGrid = field(default_factory=desk_grid)
    gripper: GripperSpec = field(default_factory=GripperSpec)
    noise: NoiseParams = field(default_factory=NoiseParams)
    plane_z_mm: float = 600.0
    camera_height_mm: float = 600.0
    inpaint_radius_px: int = 5
    refine: int = 10
    model: object = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if any(s < 0 for s in self.sigma_uv_mm) or any(s < 0 for s in self.sigma_theta_deg):
            raise ConfigurationError("sigma values must be >= 0")
        if self.source not in ("oracle", "predictor"):
            raise ConfigurationError("source must be 'oracle' or 'predictor'")
        if self.source == "predictor" and self.model is None:
            raise ConfigurationError("predictor source requires a model")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigurationError(f"unknown methods: {sorted(unknown)}")


@dataclass(frozen=True)
class EvalRow:
    method: str
    sigma_uv_mm: float
    sigma_theta_deg: float
    trials: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials


@dataclass
class EvalResult:
    rows: list
    objects_evaluated: int
    objects_skipped: int
    master_seed: int

    def rate(self, method: str, sigma_uv_mm: float, sigma_theta_deg: float) -> float:
        for r in self.rows:
            if (r.method == method and r.sigma_uv_mm == sigma_uv_mm
                    and r.sigma_theta_deg == sigma_theta_deg):
                return r.rate
        raise KeyError((method, sigma_uv_mm, sigma_theta_deg))


def _eval_object(cfg: EvalConfig, obj_index: int, obj_seed: int):
    """Success counts (n_settings, n_methods) for one object, or None to skip."""
    try:
        obj = generate_object(obj_seed)
        scene = place_object(obj, derive_seed(cfg.master_seed, _STREAM_PLACE, obj_seed),
                             cfg.grid, cfg.plane_z_mm, cfg.camera_height_mm)
        img = render_depth(scene, cfg.grid)
        noisy = apply_noise(img, cfg.noise,
                            derive_seed(cfg.master_seed, _STREAM_NOISE, obj_seed))
        proc = inpaint_zeros(noisy, cfg.inpaint_radius_px) if (noisy.data == 0).any() else noisy
        if cfg.source == "oracle":
            f = compute_grasp_function(scene, cfg.gripper, cfg.grid,
                                       derive_seed(cfg.master_seed, _STREAM_JITTER, obj_seed))
        else:
            from .predictor import predict_grasp_function

            f = predict_grasp_function(cfg.model, proc)
        plans = {}
        if "centroid" in cfg.methods:
            plans["centroid"] = centroid_plan(proc, cfg.grid, scene.plane_z)
        if "best" in cfg.methods or "robust" in cfg.methods:
            plans["best"] = best_grasp_plan(f, cfg.refine)
    except (ConfigurationError, ContentError):
        return None

    settings = [(su, st) for st in cfg.sigma_theta_deg for su in cfg.sigma_uv_mm]
    counts = np.zeros((len(settings), len(cfg.methods)), dtype=int)
    for si, (su, st) in enumerate(settings):
        unc = UncertaintyModel(sigma_uv=su, sigma_theta=math.radians(st))
        if "robust" in cfg.methods:
            plans["robust"] = robust_best_grasp_plan(f, unc, cfg.refine)
        for mi, method in enumerate(cfg.methods):
            target = plans[method]
            us = np.empty(cfg.trials)
            vs = np.empty(cfg.trials)
            ths = np.empty(cfg.trials)
            for t in range(cfg.trials):
                achieved = sample_achieved_pose(
                    target, unc,
                    derive_seed(cfg.master_seed, _STREAM_EXEC, obj_seed, si, mi, t))
                us[t], vs[t], ths[t] = achieved.u, achieved.v, achieved.theta
            ok = attempt_grasp_many(scene, cfg.gripper, us, vs, ths)
            counts[si, mi] = int(ok.sum())
    return counts


def run_sweep(cfg: EvalConfig, jobs: int = 1) -> EvalResult:
    """Evaluate every object x setting x method; deterministic per master
    seed and invariant to the number of worker processes."""
    seeds = list(cfg.object_seeds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_object, [cfg] * len(seeds),
                                    range(len(seeds)), seeds, chunksize=4))
    else:
        results = [_eval_object(cfg, i, s) for i, s in enumerate(seeds)]

    settings = [(su, st) for st in cfg.sigma_theta_deg for su in cfg.sigma_uv_mm]
    total = np.zeros((len(settings), len(cfg.methods)), dtype=int)
    evaluated = 0
    skipped = 0
    for res in results:
        if res is None:
            skipped += 1
        else:
            evaluated += 1
            total += res

    trials_per_cell = evaluated * cfg.trials
    rows = []
    for mi, method in enumerate(cfg.methods):
        for st in cfg.sigma_theta_deg:
            for su in cfg.sigma_uv_mm:
                si = settings.index((su, st))
                rows.append(EvalRow(method, float(su), float(st),
                                    trials_per_cell, int(total[si, mi])))
    return EvalResult(rows, evaluated, skipped, cfg.master_seed)


def result_to_csv(res: EvalResult) -> str:
    lines = ["method,sigma_uv_mm,sigma_theta_deg,trials,successes,rate"]
    for r in res.rows:
        rate = r.rate if r.trials else 0.0
        lines.append(f"{r.method},{r.sigma_uv_mm!r},{r.sigma_theta_deg!r},"
                     f"{r.trials},{r.successes},{rate!r}")
    return "\n".join(lines) + "\n"


def slice_to_csv(res: EvalResult, sigma_theta_deg: float) -> str:
    """Fixed-sigma_theta slice with one column per method (plot data)."""
    methods = []
    for r in res.rows:
        if r.method not in methods:
            methods.append(r.method)
    sus = []
    for r in res.rows:
        if r.sigma_theta_deg == sigma_theta_deg and r.sigma_uv_mm not in sus:
            sus.append(r.sigma_uv_mm)
    lines = ["sigma_uv_mm," + ",".join(methods)]
    for su in sus:
        vals = [repr(res.rate(m, su, sigma_theta_deg)) for m in methods]
        lines.append(f"{su!r}," + ",".join(vals))
    return "\n".join(lines) + "\n"


def summary_table(res: EvalResult) -> str:
    """Human-readable success-rate table, methods x (sigma_theta, sigma_uv)."""
    sts = []
    sus = []
    for r in res.rows:
        if r.sigma_theta_deg not in sts:
            sts.append(r.sigma_theta_deg)
        if r.sigma_uv_mm not in sus:
            sus.append(r.sigma_uv_mm)
    methods = []
    for r in res.rows:
        if r.method not in methods:
            methods.append(r.method)
    width = 9
    header = "method".ljust(10) + "".join(
        f"st={st:g},su={su:g}".rjust(width + 6) for st in sts for su in sus)
    lines = [header]
    for m in methods:
        cells = "".join(f"{res.rate(m, su, st):.3f}".rjust(width + 6)
                        for st in sts for su in sus)
        lines.append(m.ljust(10) + cells)
    lines.append(f"objects evaluated: {res.objects_evaluated}, "
                 f"skipped: {res.objects_skipped}")
    return "\n".join(lines)
