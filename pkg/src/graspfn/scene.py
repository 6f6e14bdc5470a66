"""Procedural 2.5-D scenes: extruded-polygon objects resting on a flat table.

Objects come from six parameterized shape families chosen to exercise the
phenomena that matter for grasping: long thin graspable sections, regions
blocked by adjacent mass, narrow unstable necks, and bulk too wide for the
gripper.  Generation and placement are pure functions of their seeds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .geometry import (
    convex_hull,
    ensure_ccw,
    polygon_area,
    polygon_centroid,
    polygon_diameter,
    polygon_is_simple,
)
from .pose_grid import PoseGrid

SHAPE_FAMILIES = ("bar", "l_shape", "t_shape", "convex_blob", "ring_gap", "star")

MIN_DIMENSION_MM = 50.0
MAX_DIMENSION_MM = 200.0
MIN_HEIGHT_MM = 20.0
MAX_HEIGHT_MM = 120.0


@dataclass(frozen=True)
class SceneObject:
    """Extruded polygon: footprint (N, 2) mm CCW around its centroid, plus a
    placement pose (x, y, phi) on the table plane."""

    footprint: np.ndarray
    height: float
    pose_on_plane: tuple = (0.0, 0.0, 0.0)
    density: float = 1.0
    family: str = ""

    def __post_init__(self):
        fp = ensure_ccw(np.asarray(self.footprint, dtype=float))
        object.__setattr__(self, "footprint", fp)
        if len(fp) < 3 or polygon_area(fp) <= 0:
            raise ValueError("footprint must be a polygon with positive area")
        if not polygon_is_simple(fp):
            raise ValueError("footprint must be a simple polygon")
        if self.height <= 0:
            raise ValueError("height must be positive")

    def max_dimension(self) -> float:
        return polygon_diameter(self.footprint)

    def world_footprint(self) -> np.ndarray:
        """Footprint vertices after applying the on-plane placement."""
        x, y, phi = self.pose_on_plane
        c, s = math.cos(phi), math.sin(phi)
        r = np.array([[c, -s], [s, c]])
        return self.footprint @ r.T + np.array([x, y])

    def world_centroid(self) -> np.ndarray:
        return polygon_centroid(self.world_footprint())


@dataclass(frozen=True)
class Scene:
    """One object on the table below a fixed top-down camera. Depths in mm."""

    object: SceneObject
    plane_z: float = 600.0
    camera_height: float = 600.0


def _shape_bar(rng) -> np.ndarray:
    aspect = rng.uniform(4.0, 7.0)
    w = 1.0 / aspect
    return np.array([[-0.5, -w / 2], [0.5, -w / 2], [0.5, w / 2], [-0.5, w / 2]])


def _shape_l(rng) -> np.ndarray:
    a = 1.0
    b = rng.uniform(0.6, 1.0)
    wa = rng.uniform(0.2, 0.42) * a
    wb = rng.uniform(0.2, 0.42) * b
    return np.array([[0, 0], [a, 0], [a, wb], [wa, wb], [wa, b], [0, b]], dtype=float)


def _shape_t(rng) -> np.ndarray:
    a = 1.0
    b = rng.uniform(0.7, 1.1)
    tw = rng.uniform(0.2, 0.35) * b          # cross-bar thickness
    sw = rng.uniform(0.18, 0.35) * a         # stem width
    x0 = (a - sw) / 2
    x1 = (a + sw) / 2
    return np.array(
        [[x0, 0], [x1, 0], [x1, b - tw], [a, b - tw], [a, b], [0, b], [0, b - tw], [x0, b - tw]],
        dtype=float,
    )


def _shape_blob(rng) -> np.ndarray:
    n = int(rng.integers(8, 15))
    ang = np.sort(rng.uniform(0.0, 2 * math.pi, n))
    rad = rng.uniform(0.55, 1.0, n)
    aspect = rng.uniform(1.6, 2.4)
    pts = np.stack([rad * np.cos(ang) * aspect, rad * np.sin(ang)], axis=1)
    hull = convex_hull(pts)
    if len(hull) < 3:  # collinear draw; fall back to a triangle-ish hull
        pts = np.concatenate([pts, [[0.0, 0.3], [0.1, -0.3]]])
        hull = convex_hull(pts)
    return hull


def _shape_ring_gap(rng) -> np.ndarray:
    r_in = rng.uniform(0.45, 0.7)
    gap = rng.uniform(math.radians(50), math.radians(120))
    n = 20
    ang = np.linspace(gap / 2, 2 * math.pi - gap / 2, n)
    outer = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    inner = r_in * outer[::-1]
    return np.concatenate([outer, inner])


def _shape_star(rng) -> np.ndarray:
    k = int(rng.integers(5, 8))
    inner = rng.uniform(0.35, 0.6)
    ang = np.arange(2 * k) * math.pi / k
    rad = np.where(np.arange(2 * k) % 2 == 0, 1.0, inner)
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)


_BUILDERS = {
    "bar": _shape_bar,
    "l_shape": _shape_l,
    "t_shape": _shape_t,
    "convex_blob": _shape_blob,
    "ring_gap": _shape_ring_gap,
    "star": _shape_star,
}

# family mix and per-family size ranges (all inside the global 50-200 mm
# bound): elongated shapes dominate so that most objects expose graspable
# sections next to blocked or unstable regions; stars stay small enough to
# pinch across opposite points
_FAMILY_WEIGHTS = {
    "bar": 0.20,
    "l_shape": 0.14,
    "t_shape": 0.14,
    "ring_gap": 0.18,
    "convex_blob": 0.20,
    "star": 0.14,
}
_FAMILY_SIZE_MM = {
    "bar": (80.0, 200.0),
    "l_shape": (80.0, 180.0),
    "t_shape": (80.0, 180.0),
    "ring_gap": (60.0, 160.0),
    "convex_blob": (50.0, 140.0),
    "star": (50.0, 95.0),
}


def generate_object(seed: int) -> SceneObject:
    """Deterministically generate one object; identical seeds give identical
    objects bit-for-bit.  Max planar dimension lands in [50, 200] mm."""
    rng = np.random.default_rng(seed)
    weights = np.array([_FAMILY_WEIGHTS[f] for f in SHAPE_FAMILIES])
    family = SHAPE_FAMILIES[int(rng.choice(len(SHAPE_FAMILIES), p=weights))]
    lo, hi = _FAMILY_SIZE_MM[family]
    target = rng.uniform(lo, hi)
    verts = ensure_ccw(_BUILDERS[family](rng))
    verts = verts * (target / polygon_diameter(verts))
    verts = verts - polygon_centroid(verts)
    height = rng.uniform(MIN_HEIGHT_MM, MAX_HEIGHT_MM)
    return SceneObject(footprint=verts, height=height, family=family)


def _fits(verts: np.ndarray, half_u: float, half_v: float) -> bool:
    return bool(
        (np.abs(verts[:, 0]) <= half_u).all() and (np.abs(verts[:, 1]) <= half_v).all()
    )


def place_object(obj: SceneObject, seed: int, grid: PoseGrid,
                 plane_z: float = 600.0, camera_height: float = 600.0,
                 max_attempts: int = 500) -> Scene:
    """Uniform random placement keeping the footprint fully inside the image.

    Rejection-samples (x, y, phi); if nothing fits, tries a centered placement
    before raising ConfigurationError.
    """
    rng = np.random.default_rng(seed)
    half_u = grid.nu * grid.cell_uv / 2
    half_v = grid.nv * grid.cell_uv / 2
    fp = obj.footprint
    for _ in range(max_attempts):
        x = rng.uniform(-half_u, half_u)
        y = rng.uniform(-half_v, half_v)
        phi = rng.uniform(0.0, 2 * math.pi)
        placed = replace(obj, pose_on_plane=(x, y, phi))
        if _fits(placed.world_footprint(), half_u, half_v):
            return Scene(placed, plane_z, camera_height)
    centered = replace(obj, pose_on_plane=(0.0, 0.0, 0.0))
    if _fits(centered.world_footprint(), half_u, half_v):
        return Scene(centered, plane_z, camera_height)
    raise ConfigurationError(
        f"object with max dimension {obj.max_dimension():.1f} mm does not fit the "
        f"{2 * half_u:.0f} x {2 * half_v:.0f} mm workspace"
    )


def scene_to_dict(scene: Scene) -> dict:
    x, y, phi = scene.object.pose_on_plane
    return {
        "object": {
            "footprint_mm": [[float(a), float(b)] for a, b in scene.object.footprint],
            "height_mm": float(scene.object.height),
            "pose_on_plane": {"x_mm": float(x), "y_mm": float(y), "phi_rad": float(phi)},
            "density": float(scene.object.density),
            "family": scene.object.family,
        },
        "plane_z_mm": float(scene.plane_z),
        "camera_height_mm": float(scene.camera_height),
    }


def scene_from_dict(d: dict) -> Scene:
    o = d["object"]
    pose = o.get("pose_on_plane", {})
    obj = SceneObject(
        footprint=np.asarray(o["footprint_mm"], dtype=float),
        height=float(o["height_mm"]),
        pose_on_plane=(
            float(pose.get("x_mm", 0.0)),
            float(pose.get("y_mm", 0.0)),
            float(pose.get("phi_rad", 0.0)),
        ),
        density=float(o.get("density", 1.0)),
        family=o.get("family", ""),
    )
    return Scene(obj, float(d.get("plane_z_mm", 600.0)), float(d.get("camera_height_mm", 600.0)))


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")


def load_scene(path) -> Scene:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))
