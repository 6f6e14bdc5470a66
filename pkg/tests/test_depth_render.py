import math

import numpy as np
import pytest

from graspfn.depth_render import (
    DepthImage,
    NoiseParams,
    apply_noise,
    inpaint_zeros,
    read_pgm,
    render_depth,
    resize_bilinear,
    write_pgm,
)
from graspfn.errors import ContentError
from graspfn.pose_grid import PoseGrid, desk_grid
from graspfn.scene import Scene, SceneObject


def _square_scene(side=80.0, height=100.0):
    half = side / 2
    fp = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    return Scene(SceneObject(footprint=fp, height=height))


def test_render_empty_scene_is_plane():
    # a 1 mm-tall sliver below tip clearance still renders; for a flat plane
    # use a scene whose object sits outside the view of a tiny grid
    grid = desk_grid()
    fp = np.array([[-5.0, -5.0], [5.0, -5.0], [5.0, 5.0], [-5.0, 5.0]])
    scene = Scene(SceneObject(footprint=fp, height=50.0,
                              pose_on_plane=(5000.0, 0.0, 0.0)))
    img = render_depth(scene, grid)
    assert np.all(img.data == scene.plane_z)


def test_render_square_heights():
    grid = desk_grid()
    scene = _square_scene(side=80.0, height=100.0)
    img = render_depth(scene, grid)
    us = img.pixel_u()
    vs = img.pixel_v()
    uu, vv = np.meshgrid(us, vs)
    inside = (np.abs(uu) < 39.0) & (np.abs(vv) < 39.0)
    outside = (np.abs(uu) > 41.0) | (np.abs(vv) > 41.0)
    assert np.all(img.data[inside] == scene.plane_z - 100.0)
    assert np.all(img.data[outside] == scene.plane_z)


def test_render_disk_area_within_2_percent():
    grid = desk_grid()
    ang = np.linspace(0, 2 * math.pi, 256, endpoint=False)
    disk = 25.0 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    scene = Scene(SceneObject(footprint=disk, height=60.0))
    img = render_depth(scene, grid)
    covered_px = int((img.data < scene.plane_z).sum())
    area_mm2 = covered_px / grid.px_per_mm ** 2
    assert area_mm2 == pytest.approx(math.pi * 25.0 ** 2, rel=0.02)


def test_render_translation_equivariance():
    # whole-pixel translation moves the image exactly, away from borders
    grid = PoseGrid.centered(24, 18, 6, 10.0, px_per_mm=1.0)  # 1 px = 1 mm
    fp = np.array([[-31.7, -22.3], [28.1, -17.9], [33.3, 24.7], [-27.9, 19.3]])
    s0 = Scene(SceneObject(footprint=fp, height=70.0))
    s1 = Scene(SceneObject(footprint=fp, height=70.0, pose_on_plane=(7.0, 0.0, 0.0)))
    img0 = render_depth(s0, grid)
    img1 = render_depth(s1, grid)
    assert np.array_equal(img1.data[:, 7:], img0.data[:, :-7])


def test_noise_zero_sigmas_is_identity():
    grid = desk_grid()
    img = render_depth(_square_scene(), grid)
    out = apply_noise(img, NoiseParams(0.0, 0.0), seed=1)
    assert np.array_equal(out.data, img.data)


def test_noise_reproducible_per_seed():
    grid = desk_grid()
    img = render_depth(_square_scene(), grid)
    a = apply_noise(img, NoiseParams(), seed=5)
    b = apply_noise(img, NoiseParams(), seed=5)
    c = apply_noise(img, NoiseParams(), seed=6)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_noise_depth_std_on_constant_field():
    # pixel shifts are invisible on a constant field; the residual std is
    # sigma_d, checked over >= 1e5 pixels within 5%
    img = DepthImage(np.full((320, 320), 500.0), px_per_mm=1.4)
    out = apply_noise(img, NoiseParams(sigma_p=1.0, sigma_d=1.5), seed=9)
    resid = out.data - 500.0
    assert resid.size >= 1e5
    assert np.std(resid) == pytest.approx(1.5, rel=0.05)


def test_noise_without_depth_term_stays_in_range():
    grid = desk_grid()
    img = render_depth(_square_scene(), grid)
    out = apply_noise(img, NoiseParams(sigma_p=2.0, sigma_d=0.0), seed=3)
    assert out.data.min() >= img.data.min() - 1e-9
    assert out.data.max() <= img.data.max() + 1e-9


def test_noise_defaults_match_sensor_model():
    p = NoiseParams()
    assert p.sigma_p == 1.0
    assert p.sigma_d == 1.5


def test_inpaint_no_zeros_is_identity():
    img = DepthImage(np.full((10, 10), 400.0), px_per_mm=1.4)
    out = inpaint_zeros(img, radius=5)
    assert np.array_equal(out.data, img.data)


def test_inpaint_mean_of_in_radius_neighbors():
    data = np.zeros((9, 9))
    data[4, 4] = 0.0
    data[4, 2] = 500.0
    data[4, 6] = 700.0
    img = DepthImage(data, px_per_mm=1.4)
    out = inpaint_zeros(img, radius=2)
    assert out.data[4, 4] == pytest.approx(600.0)


def test_inpaint_single_neighbor_uses_global_nearest():
    data = np.zeros((9, 9))
    data[0, 0] = 321.0
    img = DepthImage(data, px_per_mm=1.4)
    out = inpaint_zeros(img, radius=2)
    assert np.all(out.data == 321.0)


def test_inpaint_tie_breaks_row_major():
    data = np.zeros((7, 7))
    data[0, 3] = 100.0  # row-major earlier
    data[6, 3] = 200.0  # same distance from the center
    img = DepthImage(data, px_per_mm=1.4)
    out = inpaint_zeros(img, radius=1)
    assert out.data[3, 3] == 100.0


def test_inpaint_checkerboard_on_constant_field():
    data = np.full((16, 16), 1000.0)
    yy, xx = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    data[(yy + xx) % 2 == 0] = 0.0
    out = inpaint_zeros(DepthImage(data, px_per_mm=1.4), radius=5)
    assert np.all(out.data == 1000.0)


def test_inpaint_idempotent():
    rng = np.random.default_rng(4)
    data = rng.uniform(100, 900, (20, 20))
    data[rng.uniform(size=(20, 20)) < 0.2] = 0.0
    img = DepthImage(data, px_per_mm=1.4)
    once = inpaint_zeros(img, radius=5)
    twice = inpaint_zeros(once, radius=5)
    assert np.all(once.data > 0)
    assert np.array_equal(once.data, twice.data)
    # non-zero pixels unchanged
    keep = data > 0
    assert np.array_equal(once.data[keep], data[keep])


def test_inpaint_all_zero_raises():
    with pytest.raises(ContentError):
        inpaint_zeros(DepthImage(np.zeros((5, 5)), px_per_mm=1.4))


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    data = np.rint(rng.uniform(0, 65535, (13, 17)))
    img = DepthImage(data, px_per_mm=1.4)
    path = tmp_path / "img.pgm"
    write_pgm(img, path)
    loaded = read_pgm(path, px_per_mm=1.4)
    assert np.array_equal(loaded.data, data)
    # deterministic bytes
    write_pgm(img, tmp_path / "img2.pgm")
    assert (tmp_path / "img.pgm").read_bytes() == (tmp_path / "img2.pgm").read_bytes()


def test_pgm_is_big_endian_16bit(tmp_path):
    img = DepthImage(np.array([[258.0]]), px_per_mm=1.4)
    path = tmp_path / "one.pgm"
    write_pgm(img, path)
    raw = path.read_bytes()
    assert raw.endswith(bytes([1, 2]))  # 258 = 0x0102, MSB first


def test_resize_preserves_constant_and_fov():
    img = DepthImage(np.full((252, 336), 600.0), px_per_mm=1.4)
    out = resize_bilinear(img, 160, 120)
    assert out.data.shape == (120, 160)
    assert np.allclose(out.data, 600.0)
    assert out.px_per_mm == pytest.approx(1.4 * 160 / 336)


def test_depth_image_rejects_negative():
    with pytest.raises(ValueError):
        DepthImage(np.array([[-1.0]]), px_per_mm=1.4)
