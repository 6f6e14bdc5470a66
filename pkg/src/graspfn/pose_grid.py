"""Gripper pose parameterization, the discrete pose grid, and the camera-to-robot chain.

A pose is (u, v, theta): millimeter offsets from the image center plus a
rotation about the optical axis.  A parallel-jaw gripper is symmetric under
a 180-degree turn, so theta lives on [0, pi).  The grid discretizes poses
into nu x nv x ntheta cells; flat indices are theta-major, then v, then u:

    i = (itheta * nv + iv) * nu + iu

This layout is part of the on-disk grasp-function format and must not change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Pose:
    """Gripper pose in image coordinates: u, v in mm, theta in radians.

    theta is reduced modulo pi on construction (two-fold gripper symmetry).
    """

    u: float
    v: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v) and math.isfinite(self.theta)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "theta", float(self.theta) % math.pi)


@dataclass(frozen=True)
class PoseGrid:
    """Discretized pose space. cell_theta must tile [0, pi) exactly."""

    nu: int
    nv: int
    ntheta: int
    cell_uv: float
    cell_theta: float
    origin: Pose
    px_per_mm: float = 1.4

    def __post_init__(self):
        if min(self.nu, self.nv, self.ntheta) < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.cell_uv <= 0 or self.cell_theta <= 0:
            raise ValueError("cell sizes must be positive")
        if abs(self.ntheta * self.cell_theta - math.pi) > 1e-9:
            raise ValueError("ntheta * cell_theta must equal pi")
        if self.px_per_mm <= 0:
            raise ValueError("px_per_mm must be positive")

    @classmethod
    def centered(cls, nu: int, nv: int, ntheta: int, cell_uv: float = 10.0,
                 px_per_mm: float = 1.4) -> "PoseGrid":
        """Grid whose (u, v) extent is centered on the image center."""
        origin = Pose(-(nu - 1) / 2.0 * cell_uv, -(nv - 1) / 2.0 * cell_uv, 0.0)
        return cls(nu, nv, ntheta, cell_uv, math.pi / ntheta, origin, px_per_mm)

    @property
    def size(self) -> int:
        return self.nu * self.nv * self.ntheta

    @property
    def u_extent(self) -> tuple:
        return (self.origin.u - self.cell_uv / 2,
                self.origin.u + (self.nu - 0.5) * self.cell_uv)

    @property
    def v_extent(self) -> tuple:
        return (self.origin.v - self.cell_uv / 2,
                self.origin.v + (self.nv - 0.5) * self.cell_uv)

    def u_centers(self) -> np.ndarray:
        return self.origin.u + np.arange(self.nu) * self.cell_uv

    def v_centers(self) -> np.ndarray:
        return self.origin.v + np.arange(self.nv) * self.cell_uv

    def theta_centers(self) -> np.ndarray:
        return (self.origin.theta + np.arange(self.ntheta) * self.cell_theta) % math.pi

    def image_shape(self) -> tuple:
        """(height, width) in pixels of the rendered view covering the grid."""
        w = int(round(self.nu * self.cell_uv * self.px_per_mm))
        h = int(round(self.nv * self.cell_uv * self.px_per_mm))
        return h, w


def desk_grid() -> PoseGrid:
    """Default desk-scale grid: 24 x 18 x 6 cells over 240 x 180 mm."""
    return PoseGrid.centered(24, 18, 6)


def paper_grid() -> PoseGrid:
    """Full-scale preset: 44 x 33 x 6 = 8712 poses over 440 x 330 mm."""
    return PoseGrid.centered(44, 33, 6)


def _nearest_cell(x: float) -> int:
    # nearest integer; exact halves round toward the lower index
    return int(math.ceil(x - 0.5))


def pose_to_index(grid: PoseGrid, q: Pose) -> int:
    """Flat index of the grid cell whose center is nearest to q.

    Raises ValueError when (u, v) falls outside the grid extent; the message
    names the offending axis.
    """
    tol = 1e-9 * grid.cell_uv
    ulo, uhi = grid.u_extent
    vlo, vhi = grid.v_extent
    if not (ulo - tol <= q.u <= uhi + tol):
        raise ValueError(f"u={q.u} mm outside grid extent [{ulo}, {uhi}]")
    if not (vlo - tol <= q.v <= vhi + tol):
        raise ValueError(f"v={q.v} mm outside grid extent [{vlo}, {vhi}]")
    iu = _nearest_cell((q.u - grid.origin.u) / grid.cell_uv)
    iv = _nearest_cell((q.v - grid.origin.v) / grid.cell_uv)
    iu = min(max(iu, 0), grid.nu - 1)
    iv = min(max(iv, 0), grid.nv - 1)
    it = _nearest_cell((q.theta - grid.origin.theta) / grid.cell_theta) % grid.ntheta
    return (it * grid.nv + iv) * grid.nu + iu


def index_to_pose(grid: PoseGrid, i: int) -> Pose:
    """Center pose of flat cell index i. Exact inverse of pose_to_index on centers."""
    if not 0 <= i < grid.size:
        raise ValueError(f"index {i} out of range [0, {grid.size})")
    it, rem = divmod(int(i), grid.nu * grid.nv)
    iv, iu = divmod(rem, grid.nu)
    return Pose(
        grid.origin.u + iu * grid.cell_uv,
        grid.origin.v + iv * grid.cell_uv,
        grid.origin.theta + it * grid.cell_theta,
    )


def grid_to_dict(grid: PoseGrid) -> dict:
    return {
        "nu": grid.nu,
        "nv": grid.nv,
        "ntheta": grid.ntheta,
        "cell_uv_mm": grid.cell_uv,
        "px_per_mm": grid.px_per_mm,
        "origin_u_mm": grid.origin.u,
        "origin_v_mm": grid.origin.v,
        "origin_theta_rad": grid.origin.theta,
    }


def grid_from_dict(d: dict) -> PoseGrid:
    ntheta = int(d["ntheta"])
    return PoseGrid(
        nu=int(d["nu"]),
        nv=int(d["nv"]),
        ntheta=ntheta,
        cell_uv=float(d["cell_uv_mm"]),
        cell_theta=math.pi / ntheta,
        origin=Pose(float(d["origin_u_mm"]), float(d["origin_v_mm"]),
                    float(d["origin_theta_rad"])),
        px_per_mm=float(d["px_per_mm"]),
    )


def _rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _check_rigid(name: str, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (4, 4):
        raise ValueError(f"{name} must be a 4x4 homogeneous transform")
    r = t[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
        raise ValueError(f"{name} rotation block is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > 1e-9:
        raise ValueError(f"{name} rotation block must have determinant +1")
    if not np.allclose(t[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
        raise ValueError(f"{name} bottom row must be [0, 0, 0, 1]")
    return t


@dataclass(frozen=True)
class ImagePlaneLift:
    """Maps image-plane pose coordinates to a 3D pose in the camera frame.

    (u, v) millimeters become meters at the fixed working-surface depth along
    the optical axis; theta becomes a rotation about that axis.
    """

    surface_depth_m: float = 0.0

    def matrix(self, p: Pose) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = _rot_z(p.theta)
        t[0, 3] = p.u * 1e-3
        t[1, 3] = p.v * 1e-3
        t[2, 3] = self.surface_depth_m
        return t


@dataclass(frozen=True)
class CalibrationChain:
    """Rigid transforms composing image-plane poses into the robot frame."""

    t_rg: np.ndarray = field(default_factory=lambda: np.eye(4))
    t_gc: np.ndarray = field(default_factory=lambda: np.eye(4))
    t_ci: ImagePlaneLift = field(default_factory=ImagePlaneLift)

    def __post_init__(self):
        object.__setattr__(self, "t_rg", _check_rigid("t_rg", self.t_rg))
        object.__setattr__(self, "t_gc", _check_rigid("t_gc", self.t_gc))


def image_to_robot(chain: CalibrationChain, p: Pose) -> np.ndarray:
    """Robot-frame gripper target as a 4x4 transform (meters / radians)."""
    return chain.t_rg @ chain.t_gc @ chain.t_ci.matrix(p)
