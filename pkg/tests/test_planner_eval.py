import math

import numpy as np
import pytest

from graspfn.depth_render import DepthImage, render_depth
from graspfn.errors import ConfigurationError, ContentError
from graspfn.grasp_function import GraspFunction, UncertaintyModel, smooth
from graspfn.grasp_oracle import GripperSpec, attempt_grasp
from graspfn.planner_eval import (
    EvalConfig,
    best_grasp_plan,
    centroid_plan,
    derive_seed,
    result_to_csv,
    robust_best_grasp_plan,
    run_sweep,
    sample_achieved_pose,
    slice_to_csv,
    summary_table,
)
from graspfn.pose_grid import Pose, PoseGrid, desk_grid
from graspfn.scene import Scene, SceneObject


def small_grid():
    return PoseGrid.centered(12, 8, 6, 10.0)


def test_centroid_of_centered_disk_is_center_theta_zero():
    grid = desk_grid()
    ang = np.linspace(0, 2 * math.pi, 128, endpoint=False)
    disk = 30.0 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    scene = Scene(SceneObject(footprint=disk, height=60.0))
    img = render_depth(scene, grid)
    p = centroid_plan(img, grid, scene.plane_z)
    assert abs(p.u) < 0.5 and abs(p.v) < 0.5
    assert p.theta == 0.0  # isotropic tie rule


def test_centroid_bar_theta_perpendicular():
    grid = desk_grid()
    fp = np.array([[-60.0, -10.0], [60.0, -10.0], [60.0, 10.0], [-60.0, 10.0]])
    scene = Scene(SceneObject(footprint=fp, height=50.0))
    img = render_depth(scene, grid)
    p = centroid_plan(img, grid, scene.plane_z)
    assert p.theta == pytest.approx(math.pi / 2, abs=1e-6)


def test_centroid_translation_equivariance():
    grid = desk_grid()
    fp = np.array([[-60.0, -10.0], [60.0, -10.0], [60.0, 10.0], [-60.0, 10.0]])
    s0 = Scene(SceneObject(footprint=fp, height=50.0))
    s1 = Scene(SceneObject(footprint=fp, height=50.0, pose_on_plane=(30.0, 0.0, 0.0)))
    p0 = centroid_plan(render_depth(s0, grid), grid, s0.plane_z)
    p1 = centroid_plan(render_depth(s1, grid), grid, s1.plane_z)
    assert p1.u - p0.u == pytest.approx(30.0, abs=0.3)
    assert p1.v == pytest.approx(p0.v, abs=0.3)
    assert p1.theta == pytest.approx(p0.theta, abs=1e-6)


def test_centroid_empty_mask_raises():
    img = DepthImage(np.full((50, 50), 600.0), px_per_mm=1.4)
    with pytest.raises(ContentError):
        centroid_plan(img, desk_grid(), 600.0)


def test_centroid_estimates_plane_from_median():
    grid = desk_grid()
    fp = np.array([[-30.0, -10.0], [30.0, -10.0], [30.0, 10.0], [-30.0, 10.0]])
    scene = Scene(SceneObject(footprint=fp, height=50.0))
    img = render_depth(scene, grid)
    p = centroid_plan(img, grid)  # no plane depth given
    assert abs(p.u) < 0.5 and abs(p.v) < 0.5


def test_zero_uncertainty_robust_equals_best():
    grid = small_grid()
    rng = np.random.default_rng(0)
    for seed in range(20):
        f = GraspFunction(grid, rng.uniform(0, 1, grid.size))
        assert robust_best_grasp_plan(f, UncertaintyModel()) == best_grasp_plan(f)


def test_robust_prefers_plateau_over_isolated_peak():
    # a 1-cell peak of 1.0 next to zeros loses to a 5-cell plateau of 0.8
    # once smoothing reflects 1.5 cells of (u, v) noise
    grid = small_grid()
    vol = np.zeros((grid.ntheta, grid.nv, grid.nu))
    vol[0, 4, 1] = 1.0
    vol[0, 4, 5:10] = 0.8
    f = GraspFunction(grid, vol.ravel())
    best = best_grasp_plan(f)
    assert best.u == pytest.approx(grid.origin.u + 1 * grid.cell_uv)

    unc = UncertaintyModel(sigma_uv=1.5 * grid.cell_uv)
    robust = robust_best_grasp_plan(f, unc)
    plateau_lo = grid.origin.u + 5 * grid.cell_uv
    plateau_hi = grid.origin.u + 9 * grid.cell_uv
    assert plateau_lo - 1e-9 <= robust.u <= plateau_hi + 1e-9

    # brute-force confirmation on the smoothed volume
    sm = smooth(f, unc)
    iu_best = int(np.argmax(sm.volume()[0, 4]))
    assert 5 <= iu_best <= 9


def test_sample_achieved_pose_zero_uncertainty_exact():
    target = Pose(12.5, -7.25, 0.9)
    out = sample_achieved_pose(target, UncertaintyModel(), seed=4)
    assert out == target


def test_sample_achieved_pose_statistics():
    target = Pose(10.0, -5.0, 1.0)
    unc = UncertaintyModel(sigma_uv=8.0, sigma_theta=math.radians(12))
    n = 100_000
    us = np.empty(n)
    vs = np.empty(n)
    ths = np.empty(n)
    for i in range(n):
        p = sample_achieved_pose(target, unc, seed=i)
        us[i], vs[i] = p.u, p.v
        # undo the mod-pi reduction for circular statistics around 1.0 rad
        th = p.theta if abs(p.theta - 1.0) < math.pi / 2 else p.theta - math.pi
        ths[i] = th
    se = 8.0 / math.sqrt(n)
    assert abs(us.mean() - 10.0) < 3 * se
    assert abs(vs.mean() + 5.0) < 3 * se
    assert np.std(us) == pytest.approx(8.0, rel=0.03)
    assert np.std(vs) == pytest.approx(8.0, rel=0.03)
    assert np.std(ths) == pytest.approx(math.radians(12), rel=0.03)


def test_sample_achieved_pose_full_covariance():
    target = Pose(0.0, 0.0, 0.0)
    cov = np.array([[100.0, 50.0], [50.0, 64.0]])
    unc = UncertaintyModel(cov_uv=cov)
    n = 60_000
    pts = np.array([[p.u, p.v] for p in
                    (sample_achieved_pose(target, unc, seed=i) for i in range(n))])
    sample_cov = np.cov(pts.T)
    assert np.allclose(sample_cov, cov, rtol=0.06, atol=1.5)


def _plainly_graspable_bar_seedset():
    # object seed 3 generates a graspable bar on the default desk grid
    return (3,)


def test_run_sweep_counts_and_determinism():
    cfg = EvalConfig(
        object_seeds=(3, 6, 11, 14),
        sigma_uv_mm=(5.0, 15.0),
        sigma_theta_deg=(10.0, 30.0),
        trials=3,
        master_seed=5,
    )
    res1 = run_sweep(cfg)
    res2 = run_sweep(cfg)
    assert result_to_csv(res1) == result_to_csv(res2)
    assert len(res1.rows) == 3 * 2 * 2
    for r in res1.rows:
        assert r.trials == res1.objects_evaluated * cfg.trials
        assert 0 <= r.successes <= r.trials
    assert res1.objects_evaluated + res1.objects_skipped == 4


def test_run_sweep_parallel_matches_serial():
    cfg = EvalConfig(
        object_seeds=(3, 6, 11, 14),
        sigma_uv_mm=(5.0,),
        sigma_theta_deg=(10.0,),
        trials=2,
        master_seed=7,
    )
    assert result_to_csv(run_sweep(cfg, jobs=1)) == result_to_csv(run_sweep(cfg, jobs=2))


def test_run_sweep_single_graspable_bar_zero_noise():
    # one plainly graspable object, zero uncertainty: best and robust succeed
    cfg = EvalConfig(
        object_seeds=_plainly_graspable_bar_seedset(),
        sigma_uv_mm=(0.0,),
        sigma_theta_deg=(0.0,),
        trials=1,
        master_seed=0,
    )
    res = run_sweep(cfg)
    assert res.objects_evaluated == 1
    assert res.rate("best", 0.0, 0.0) == 1.0
    assert res.rate("robust", 0.0, 0.0) == 1.0


def test_run_sweep_skips_unplaceable_objects():
    # on a tiny 80 x 60 mm workspace, seed 1 (a 136 mm blob) cannot be placed
    tiny = PoseGrid.centered(8, 6, 6, 10.0, 1.0)
    cfg = EvalConfig(object_seeds=(0, 1), sigma_uv_mm=(5.0,),
                     sigma_theta_deg=(10.0,), trials=1, master_seed=0, grid=tiny)
    res = run_sweep(cfg)
    assert res.objects_skipped == 1
    assert res.objects_evaluated == 1


def test_eval_config_validation():
    with pytest.raises(ConfigurationError):
        EvalConfig(object_seeds=(1,), trials=0)
    with pytest.raises(ConfigurationError):
        EvalConfig(object_seeds=(1,), sigma_uv_mm=(-1.0,))
    with pytest.raises(ConfigurationError):
        EvalConfig(object_seeds=(1,), source="predictor")
    with pytest.raises(ConfigurationError):
        EvalConfig(object_seeds=(1,), methods=("centroid", "bogus"))


def test_csv_output_shape():
    cfg = EvalConfig(object_seeds=(3,), sigma_uv_mm=(5.0, 10.0),
                     sigma_theta_deg=(10.0, 20.0), trials=2, master_seed=1)
    res = run_sweep(cfg)
    csv = result_to_csv(res)
    lines = csv.strip().split("\n")
    assert lines[0] == "method,sigma_uv_mm,sigma_theta_deg,trials,successes,rate"
    assert len(lines) == 1 + 3 * 4
    sl = slice_to_csv(res, 10.0)
    assert sl.startswith("sigma_uv_mm,centroid,best,robust")
    assert len(sl.strip().split("\n")) == 3
    table = summary_table(res)
    assert "centroid" in table and "robust" in table


def test_success_judged_by_single_attempt_at_achieved_pose():
    # trace one trial by hand: with zero uncertainty the achieved pose is the
    # planned pose, and the trial outcome equals attempt_grasp there
    grid = desk_grid()
    grip = GripperSpec()
    from graspfn.grasp_oracle import compute_grasp_function
    from graspfn.scene import generate_object, place_object

    seed = 3
    obj = generate_object(seed)
    scene = place_object(obj, derive_seed(0, 1, seed), grid)
    f = compute_grasp_function(scene, grip, grid, derive_seed(0, 3, seed))
    pose = best_grasp_plan(f)
    assert attempt_grasp(scene, grip, pose)
