"""Quasi-static parallel-jaw grasp oracle.

A grasp attempt at pose (u, v, theta) is evaluated in the grasp frame, where
the closing axis is x and the jaw line is y.  The attempt succeeds iff all of:

1. no collision: neither open-finger rectangle (inner faces at x = +/-gap/2,
   thickness along x, finger width along y) overlaps the footprint, for
   objects taller than the fingertip clearance;
2. closure contact: within the jaw band |y| <= width/2 and between the open
   fingers |x| <= gap/2, the footprint is present and its extent along the
   closing axis is strictly inside (0, gap) - each finger meets the boundary
   before meeting the other finger;
3. force closure: at each contact region (footprint boundary clipped to a
   shallow slab behind the first touch), the length-weighted mean outward
   normal points into the closing axis within the friction cone atan(mu);
4. lift stability: the footprint's uniform-density center of mass projects
   onto the jaw line within width/2 of the span between the two contact
   regions' y-extents (no torque-out).

Material beyond the fingertips (|x| > gap/2) is ignored by closure: the jaws
simply cannot reach it; it still participates in collision checking.

Per-pose scores average five attempts jittered uniformly within the cell.
Jitter offsets are drawn per theta slab and shared across (u, v) cells, which
keeps ground-truth functions exactly equivariant under whole-cell scene
translation while remaining deterministic and schedule-independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import clip_segments, point_in_polygons, polygon_centroid
from .grasp_function import GraspFunction
from .pose_grid import Pose, PoseGrid, index_to_pose
from .scene import Scene

ATTEMPTS_PER_POSE = 5
CONTACT_DEPTH_MM = 1.0


@dataclass(frozen=True)
class GripperSpec:
    """Parallel-jaw gripper geometry (millimeters) and contact friction."""

    finger_gap: float = 100.0
    finger_width: float = 20.0
    finger_thickness: float = 10.0
    tip_clearance: float = 1.0
    lift_height: float = 200.0
    friction_mu: float = 0.6

    def __post_init__(self):
        vals = (self.finger_gap, self.finger_width, self.finger_thickness,
                self.tip_clearance, self.lift_height, self.friction_mu)
        if any(v <= 0 for v in vals):
            raise ValueError("all gripper parameters must be positive")
        if self.finger_gap <= self.finger_thickness:
            raise ValueError("finger_gap must exceed finger_thickness")


def _rect_hits(X, Y, X1, Y1, xlo, xhi, ylo, yhi):
    """True per polygon when it overlaps the axis-aligned rectangle."""
    _, _, ok = clip_segments(X, Y, X1, Y1, xlo, xhi, ylo, yhi)
    hit = ok.any(axis=1)
    for cx, cy in ((xlo, ylo), (xlo, yhi), (xhi, ylo), (xhi, yhi)):
        hit |= point_in_polygons(cx, cy, X, Y)
    return hit


def attempt_grasp_many(scene: Scene, gripper: GripperSpec,
                       u: np.ndarray, v: np.ndarray,
                       theta: np.ndarray) -> np.ndarray:
    """Vectorized attempt_grasp over arrays of poses. Returns (K,) bool."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    k = u.size
    if scene.object.height <= gripper.tip_clearance:
        return np.zeros(k, dtype=bool)  # fingers sweep above the object

    world = scene.object.world_footprint()
    com = polygon_centroid(world)
    hw = gripper.finger_width / 2
    g2 = gripper.finger_gap / 2
    thick = gripper.finger_thickness
    cone = 1.0 / math.sqrt(1.0 + gripper.friction_mu ** 2)

    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.cos(theta)[:, None]
        s = np.sin(theta)[:, None]
        dx = world[:, 0][None, :] - u[:, None]
        dy = world[:, 1][None, :] - v[:, None]
        X = dx * c + dy * s
        Y = -dx * s + dy * c
        X1 = np.roll(X, -1, axis=1)
        Y1 = np.roll(Y, -1, axis=1)

        # (1) open fingers must not start inside the object
        collide = _rect_hits(X, Y, X1, Y1, g2, g2 + thick, -hw, hw)
        collide |= _rect_hits(X, Y, X1, Y1, -g2 - thick, -g2, -hw, hw)
        alive = ~collide

        # (2) closure contact inside the jaw band, between the open fingers
        t0, t1, valid = clip_segments(X, Y, X1, Y1, -g2, g2, -hw, hw)
        ex = X1 - X
        ey = Y1 - Y
        cx0 = X + t0 * ex
        cx1 = X + t1 * ex
        s_max = np.where(valid, np.maximum(cx0, cx1), -np.inf).max(axis=1)
        s_min = np.where(valid, np.minimum(cx0, cx1), np.inf).min(axis=1)
        width = s_max - s_min
        alive &= valid.any(axis=1) & (width > 0.0) & (width < gripper.finger_gap)

        # (3) friction-cone check on both contact regions
        delta = np.minimum(CONTACT_DEPTH_MM, width / 4)[:, None]
        elen = np.hypot(ex, ey)
        nx = ey / elen
        ny = -ex / elen

        def contact(xlo, xhi, want_positive_x):
            ta0, ta1, va = clip_segments(X, Y, X1, Y1, xlo, xhi, -hw, hw)
            seg = np.where(va, (ta1 - ta0) * elen, 0.0)
            nax = np.where(va, seg * nx, 0.0).sum(axis=1)
            nay = np.where(va, seg * ny, 0.0).sum(axis=1)
            norm = np.hypot(nax, nay)
            sign = 1.0 if want_positive_x else -1.0
            ok = (norm > 1e-9) & (sign * nax >= cone * norm)
            ya = Y + ta0 * ey
            yb = Y + ta1 * ey
            ymin = np.where(va, np.minimum(ya, yb), np.inf).min(axis=1)
            ymax = np.where(va, np.maximum(ya, yb), -np.inf).max(axis=1)
            return ok, ymin, ymax

        oka, yamin, yamax = contact((s_max[:, None] - delta), g2, True)
        okb, ybmin, ybmax = contact(-g2, (s_min[:, None] + delta), False)
        alive &= oka & okb

        # (4) center of mass within the span between the two contact regions
        wcom = -(com[0] - u) * s[:, 0] + (com[1] - v) * c[:, 0]
        lo = np.minimum(yamin, ybmin)
        hi = np.maximum(yamax, ybmax)
        alive &= (wcom >= lo - hw) & (wcom <= hi + hw)

    return alive


def attempt_grasp(scene: Scene, gripper: GripperSpec, q: Pose) -> bool:
    """Deterministic success test of a single grasp attempt at pose q."""
    return bool(attempt_grasp_many(scene, gripper,
                                   np.array([q.u]), np.array([q.v]),
                                   np.array([q.theta]))[0])


def _slab_jitters(grid: PoseGrid, seed: int) -> np.ndarray:
    """(ntheta, attempts, 3) uniform in-cell offsets (du, dv, dtheta).

    One draw per theta slab, shared by every (u, v) cell in that slab.
    """
    out = np.empty((grid.ntheta, ATTEMPTS_PER_POSE, 3))
    for it in range(grid.ntheta):
        rng = np.random.default_rng([int(seed), it])
        out[it, :, 0] = rng.uniform(-grid.cell_uv / 2, grid.cell_uv / 2, ATTEMPTS_PER_POSE)
        out[it, :, 1] = rng.uniform(-grid.cell_uv / 2, grid.cell_uv / 2, ATTEMPTS_PER_POSE)
        out[it, :, 2] = rng.uniform(-grid.cell_theta / 2, grid.cell_theta / 2,
                                    ATTEMPTS_PER_POSE)
    return out


def score_pose(scene: Scene, gripper: GripperSpec, grid: PoseGrid, i: int,
               seed: int) -> float:
    """Fraction of five jittered attempts that succeed for cell i: one of
    {0, 0.2, 0.4, 0.6, 0.8, 1.0}. Deterministic per (seed, i)."""
    center = index_to_pose(grid, i)
    it = int(i) // (grid.nu * grid.nv)
    jit = _slab_jitters(grid, seed)[it]
    ok = attempt_grasp_many(scene, gripper,
                            center.u + jit[:, 0],
                            center.v + jit[:, 1],
                            center.theta + jit[:, 2])
    return float(ok.sum()) / ATTEMPTS_PER_POSE


def compute_grasp_function(scene: Scene, gripper: GripperSpec, grid: PoseGrid,
                           seed: int) -> GraspFunction:
    """Ground-truth grasp function: score_pose at every flat index."""
    jit = _slab_jitters(grid, seed)
    ucs = grid.u_centers()
    vcs = grid.v_centers()
    tcs = grid.theta_centers()
    uu, vv = np.meshgrid(ucs, vcs)  # (nv, nu)
    succ = np.zeros((grid.ntheta, grid.nv, grid.nu))
    for it in range(grid.ntheta):
        us = (uu.ravel()[None, :] + jit[it, :, 0][:, None]).ravel()
        vs = (vv.ravel()[None, :] + jit[it, :, 1][:, None]).ravel()
        ts = np.repeat(tcs[it] + jit[it, :, 2], uu.size)
        ok = attempt_grasp_many(scene, gripper, us, vs, ts)
        succ[it] = ok.reshape(ATTEMPTS_PER_POSE, grid.nv, grid.nu).sum(axis=0)
    return GraspFunction(grid, (succ / ATTEMPTS_PER_POSE).ravel(),
                         provenance="oracle", seed=int(seed))
