"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`.  The suite exercises the
full pipeline at desk scale; total runtime is dominated by the robustness
sweep (criterion 5) and the overfit training run (criterion 4).
"""
import math
import os
import time

import numpy as np

import graspfn as g
from graspfn.cli import main
from graspfn.grasp_function import (
    GraspFunction,
    UncertaintyModel,
    gaussian_kernel,
    interpolate_many,
    shift_rotate_function,
    smooth,
)
from graspfn.planner_eval import EvalConfig, derive_seed, run_sweep, summary_table
from graspfn.pose_grid import PoseGrid, desk_grid, index_to_pose
from graspfn.predictor import (
    PredictorConfig,
    TrainConfig,
    TrainingExample,
    init_model,
    loss,
    loss_and_grad,
    make_augmented_dataset,
    predict_grasp_function,
    train,
)


def _report(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def _naive_smooth(volume, kernel):
    nt, nv, nu = volume.shape
    kt, kv, ku = kernel.shape
    rt, rv, ru = kt // 2, kv // 2, ku // 2
    out = np.zeros_like(volume)
    for t in range(nt):
        for v in range(nv):
            for u in range(nu):
                acc = 0.0
                for a in range(kt):
                    for b in range(kv):
                        for c in range(ku):
                            tt = (t + a - rt) % nt
                            vv = v + b - rv
                            uu = u + c - ru
                            if 0 <= vv < nv and 0 <= uu < nu:
                                acc += kernel[a, b, c] * volume[tt, vv, uu]
                out[t, v, u] = acc
    return out


def test_criterion_1_convolution_oracle_equivalence():
    t0 = time.perf_counter()
    grid = PoseGrid.centered(8, 6, 6, 10.0)
    rng = np.random.default_rng(20)
    worst = 0.0
    for k in range(20):
        f = GraspFunction(grid, rng.uniform(0, 1, grid.size))
        unc = UncertaintyModel(sigma_uv=rng.uniform(0.0, 25.0),
                               sigma_theta=rng.uniform(0.0, math.radians(40)))
        expected = _naive_smooth(f.volume(), gaussian_kernel(grid, unc))
        diff = np.abs(smooth(f, unc).volume() - expected).max()
        worst = max(worst, diff)
    dt = time.perf_counter() - t0
    _report("criterion 1 (smooth vs naive convolution)",
            worst < 1e-9 and dt < 5.0,
            f"max abs diff {worst:.2e} over 20 settings in {dt:.1f} s")


def test_criterion_2_interpolation_exactness():
    t0 = time.perf_counter()
    grid = PoseGrid.centered(8, 6, 6, 10.0)
    rng = np.random.default_rng(21)
    centers_exact = True
    dual_worst = 0.0
    for k in range(100):
        f = GraspFunction(grid, rng.uniform(0, 1, grid.size))
        poses = [index_to_pose(grid, i) for i in range(grid.size)]
        us = np.array([p.u for p in poses])
        vs = np.array([p.v for p in poses])
        ts = np.array([p.theta for p in poses])
        got = interpolate_many(f, us, vs, ts)
        if not np.array_equal(got, f.scores):
            centers_exact = False
        # centers of the dual cells: the 8-corner means
        vol = f.volume()
        du = grid.u_centers()[:-1] + grid.cell_uv / 2
        dv = grid.v_centers()[:-1] + grid.cell_uv / 2
        dt_ = grid.theta_centers() + grid.cell_theta / 2
        tg, vg, ug = np.meshgrid(dt_, dv, du, indexing="ij")
        got2 = interpolate_many(f, ug.ravel(), vg.ravel(), tg.ravel())
        corners = np.zeros_like(got2)
        n = 0
        for a in range(grid.ntheta):
            a2 = (a + 1) % grid.ntheta
            block = (vol[a, :-1, :-1] + vol[a, :-1, 1:] + vol[a, 1:, :-1]
                     + vol[a, 1:, 1:] + vol[a2, :-1, :-1] + vol[a2, :-1, 1:]
                     + vol[a2, 1:, :-1] + vol[a2, 1:, 1:]) / 8.0
            corners[n:n + block.size] = block.ravel()
            n += block.size
        dual_worst = max(dual_worst, np.abs(got2 - corners).max())
    dt = time.perf_counter() - t0
    _report("criterion 2 (interpolation exactness)",
            centers_exact and dual_worst < 1e-12 and dt < 5.0,
            f"centers exact={centers_exact}, dual-center max diff "
            f"{dual_worst:.2e} in {dt:.1f} s")


def test_criterion_3_gradient_correctness():
    t0 = time.perf_counter()
    grid = PoseGrid.centered(2, 2, 2, 10.0)
    cfg = PredictorConfig(input_height=12, input_width=16, conv_channels=(2, 3),
                          kernel_size=3, fc_sizes=(8,))
    model = init_model(cfg, grid, 7)
    rng = np.random.default_rng(11)
    eps = 1e-5
    worst = 0.0
    for trial in range(10):
        x = rng.normal(0.0, 0.5, (1, 1, 12, 16))
        labels = rng.integers(0, 6, (1, grid.size))
        logits = model.forward_batch(x)
        _, dl = loss_and_grad(logits, labels)
        model.backward_batch(dl)
        grads = [gr.copy() for gr in model.grads()]
        for pi, p in enumerate(model.params):
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + eps
                lp = loss(model.forward_batch(x), labels)
                p[idx] = orig - eps
                lm = loss(model.forward_batch(x), labels)
                p[idx] = orig
                num = (lp - lm) / (2 * eps)
                ana = grads[pi][idx]
                worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    dt = time.perf_counter() - t0
    _report("criterion 3 (analytic vs finite-difference gradients)",
            worst < 1e-4 and dt < 60.0,
            f"max relative error {worst:.2e} over 10 inputs in {dt:.1f} s")


def test_criterion_4_overfit_smoke():
    t0 = time.perf_counter()
    grid = desk_grid()
    grip = g.GripperSpec()
    seed = 3
    obj = g.generate_object(seed)
    scene = g.place_object(obj, derive_seed(0, 1, seed), grid)
    img = g.render_depth(scene, grid)
    noisy = g.apply_noise(img, g.NoiseParams(), derive_seed(0, 2, seed))
    oracle = g.compute_grasp_function(scene, grip, grid, derive_seed(0, 3, seed))
    labels = np.rint(oracle.scores * 5).astype(np.int64)
    example = TrainingExample(noisy, labels)

    pcfg = PredictorConfig(input_height=72, input_width=96)
    dataset = make_augmented_dataset(example, 100, grid, pcfg, seed=99)
    tc = TrainConfig(predictor=pcfg, grid=grid, batch_size=8, learning_rate=2.0,
                     steps=3000, seed=0)
    result = train(dataset, tc)
    total = sum(loss(result.model.forward_batch(x[None])[0], lab)
                for x, lab in dataset) / len(dataset)
    predicted = predict_grasp_function(result.model, noisy)
    mad = float(np.abs(predicted.scores - oracle.scores).mean())
    dt = time.perf_counter() - t0
    _report("criterion 4 (overfit smoke test)",
            total < 0.05 and mad < 0.1 and dt < 600.0,
            f"loss {total:.4f} (< 0.05), oracle MAD {mad:.4f} (< 0.1) in {dt:.0f} s")


def test_criterion_5_robustness_trend():
    t0 = time.perf_counter()
    cfg = EvalConfig(object_seeds=tuple(range(100)), trials=20, master_seed=0)
    res = run_sweep(cfg)
    print()
    print(summary_table(res))

    def margin(su, st):
        return res.rate("robust", su, st) - res.rate("best", su, st)

    # a. robust >= best wherever sigma_uv >= 15; margin >= 3 points at 20 mm
    a_ok = all(margin(su, st) >= 0.0
               for su in (15.0, 20.0) for st in (10.0, 20.0, 30.0, 40.0))
    a_margins = [margin(20.0, st) for st in (10.0, 20.0, 30.0, 40.0)]
    a_ok = a_ok and all(m >= 0.03 for m in a_margins)

    # b. margin non-decreasing in sigma_uv at sigma_theta = 10 (2-point slack)
    b_margins = [margin(su, 10.0) for su in (5.0, 10.0, 15.0, 20.0)]
    b_ok = all(b_margins[i + 1] >= b_margins[i] - 0.02
               for i in range(len(b_margins) - 1))

    # c. best <= centroid at (20 mm, 40 deg)
    c_ok = res.rate("best", 20.0, 40.0) <= res.rate("centroid", 20.0, 40.0)

    # d. every method degrades from sigma_uv 5 to 20 at fixed sigma_theta
    d_ok = all(res.rate(m, 20.0, st) < res.rate(m, 5.0, st)
               for m in ("centroid", "best", "robust")
               for st in (10.0, 20.0, 30.0, 40.0))

    dt = time.perf_counter() - t0
    detail = (f"a={a_ok} (margins at 20 mm: {[round(m, 3) for m in a_margins]}), "
              f"b={b_ok} (margins at 10 deg: {[round(m, 3) for m in b_margins]}), "
              f"c={c_ok}, d={d_ok}, {res.objects_evaluated} objects in {dt:.0f} s")
    _report("criterion 5 (robustness trends)",
            a_ok and b_ok and c_ok and d_ok and dt < 1800.0, detail)


def test_criterion_6_zero_uncertainty_degeneracy():
    t0 = time.perf_counter()
    grid = PoseGrid.centered(10, 8, 6, 10.0)
    rng = np.random.default_rng(6)
    zero = UncertaintyModel()
    ok = True
    for k in range(200):
        f = GraspFunction(grid, rng.uniform(0, 1, grid.size))
        if g.robust_best_grasp_plan(f, zero) != g.best_grasp_plan(f):
            ok = False
            break
    dt = time.perf_counter() - t0
    _report("criterion 6 (zero-uncertainty degeneracy)",
            ok and dt < 5.0, f"200 random functions in {dt:.1f} s")


def test_criterion_7_equivariance_suite():
    t0 = time.perf_counter()
    grid = desk_grid()
    grip = g.GripperSpec()

    # oracle translation equivariance on 20 scenes (interior cells)
    oracle_ok = True
    placed = 0
    seed = 0
    while placed < 20:
        obj = g.generate_object(seed)
        try:
            scene0 = g.place_object(obj, derive_seed(7, 1, seed), grid)
        except g.ConfigurationError:
            seed += 1
            continue
        x, y, phi = scene0.object.pose_on_plane
        if abs(x + grid.cell_uv) > grid.nu * grid.cell_uv / 2 - obj.max_dimension() / 2:
            seed += 1
            continue  # keep the shifted copy fully inside the view
        from dataclasses import replace

        shifted_obj = replace(scene0.object, pose_on_plane=(x + grid.cell_uv, y, phi))
        scene1 = g.Scene(shifted_obj, scene0.plane_z, scene0.camera_height)
        f0 = g.compute_grasp_function(scene0, grip, grid, derive_seed(7, 3, seed))
        f1 = g.compute_grasp_function(scene1, grip, grid, derive_seed(7, 3, seed))
        expected = shift_rotate_function(grid, f0, 1, 0, 0)
        if not np.array_equal(f1.volume()[:, :, 1:], expected.volume()[:, :, 1:]):
            oracle_ok = False
            break
        placed += 1
        seed += 1

    # smooth theta-shift equivariance, exact, on 50 random functions
    small = PoseGrid.centered(8, 6, 6, 10.0)
    rng = np.random.default_rng(77)
    smooth_ok = True
    for k in range(50):
        f = GraspFunction(small, rng.uniform(0, 1, small.size))
        unc = UncertaintyModel(sigma_uv=rng.uniform(0, 20),
                               sigma_theta=rng.uniform(0, math.radians(40)))
        shift = int(rng.integers(1, small.ntheta))
        lhs = smooth(GraspFunction(small, np.roll(f.volume(), shift, 0).ravel()),
                     unc).volume()
        rhs = np.roll(smooth(f, unc).volume(), shift, 0)
        if not np.array_equal(lhs, rhs):
            smooth_ok = False
            break

    # shift_rotate_function round-trip identity
    round_ok = True
    for k in range(20):
        f = GraspFunction(small, rng.uniform(0, 1, small.size))
        du, dv = int(rng.integers(-3, 4)), int(rng.integers(-2, 3))
        dt_ = int(rng.integers(0, small.ntheta))
        back = shift_rotate_function(
            small, shift_rotate_function(small, f, du, dv, dt_), -du, -dv, -dt_)
        # cells whose intermediate position stayed on the grid survive
        sl_u = slice(max(0, -du), small.nu - max(0, du))
        sl_v = slice(max(0, -dv), small.nv - max(0, dv))
        if not np.array_equal(back.volume()[:, sl_v, sl_u],
                              f.volume()[:, sl_v, sl_u]):
            round_ok = False
            break

    dt = time.perf_counter() - t0
    _report("criterion 7 (equivariance suite)",
            oracle_ok and smooth_ok and round_ok and dt < 600.0,
            f"oracle={oracle_ok}, smooth theta={smooth_ok}, round trip={round_ok} "
            f"in {dt:.0f} s")


def test_criterion_8_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    import json

    cfg_doc = {
        "master_seed": 42,
        "grid": {"nu": 24, "nv": 18, "ntheta": 6, "cell_uv_mm": 10.0,
                 "px_per_mm": 1.0},
        "predictor": {"input_width": 48, "input_height": 36,
                      "conv_channels": [2, 3], "fc_sizes": [8]},
        "train": {"batch_size": 2, "learning_rate": 0.5, "steps": 15},
        "eval": {"object_seeds": [3, 6, 27], "sigma_uv_mm": [5.0, 20.0],
                 "sigma_theta_deg": [10.0], "trials": 3},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg_doc))

    def run_all(tag):
        base = tmp_path / tag
        data = base / "data"
        assert main(["generate", "--config", str(cfg_path), "--count", "2",
                     "--out", str(data)]) == 0
        assert main(["train", "--config", str(cfg_path), "--dataset", str(data),
                     "--out", str(base / "model.bin")]) == 0
        assert main(["evaluate", "--config", str(cfg_path),
                     "--out", str(base / "results.csv")]) == 0
        blobs = {}
        for root, _, files in os.walk(base):
            for name in files:
                path = os.path.join(root, name)
                with open(path, "rb") as fh:
                    blobs[os.path.relpath(path, base)] = fh.read()
        return blobs

    first = run_all("run1")
    second = run_all("run2")
    ok = first == second and len(first) >= 12
    dt = time.perf_counter() - t0
    _report("criterion 8 (generate/train/evaluate determinism)",
            ok, f"{len(first)} output files byte-identical across runs in {dt:.0f} s")
