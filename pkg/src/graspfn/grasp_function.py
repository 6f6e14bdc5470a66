"""Grasp functions and their algebra: pose-uncertainty smoothing, trilinear
interpolation, continuous argmax, and whole-cell shift/rotate relabeling.

Scores are stored flat in theta-major order (see pose_grid); volume() views
them as (ntheta, nv, nu).  Smoothing convolves with a truncated Gaussian
kernel: the theta axis is cyclic (period pi), the (u, v) axes use zero
padding because poses outside the workspace have grasp quality 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .pose_grid import Pose, PoseGrid, grid_from_dict, grid_to_dict


@dataclass(frozen=True)
class UncertaintyModel:
    """Std of the achieved pose about the commanded pose.

    sigma_uv is an isotropic millimeter std in (u, v); cov_uv, when given, is
    a full 2x2 covariance in mm^2 and takes precedence.  theta noise is
    independent of (u, v).
    """

    sigma_uv: float = 0.0
    sigma_theta: float = 0.0
    cov_uv: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma_uv < 0 or self.sigma_theta < 0:
            raise ValueError("uncertainty sigmas must be >= 0")
        if self.cov_uv is not None:
            c = np.asarray(self.cov_uv, dtype=float)
            if c.shape != (2, 2) or not np.allclose(c, c.T, atol=1e-12):
                raise ValueError("cov_uv must be a symmetric 2x2 matrix")
            if np.linalg.eigvalsh(c).min() < -1e-9:
                raise ValueError("cov_uv must be positive semi-definite")
            object.__setattr__(self, "cov_uv", c)

    def is_zero(self) -> bool:
        if self.cov_uv is not None and self.cov_uv.any():
            return False
        if self.cov_uv is None and self.sigma_uv > 0:
            return False
        return self.sigma_theta == 0


@dataclass
class GraspFunction:
    """One score in [0, 1] per discrete pose of `grid`, flat theta-major."""

    grid: PoseGrid
    scores: np.ndarray
    provenance: str = "oracle"
    seed: int | None = None
    uncertainty: UncertaintyModel | None = None

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        if s.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} scores, got {s.size}")
        if (s < -1e-6).any() or (s > 1 + 1e-6).any():
            raise ValueError("scores must lie in [0, 1]")
        self.scores = np.clip(s, 0.0, 1.0)

    def volume(self) -> np.ndarray:
        return self.scores.reshape(self.grid.ntheta, self.grid.nv, self.grid.nu)


def _axis_kernel(sigma_cells: float) -> np.ndarray:
    """Gaussian sampled at integer cell offsets, truncated at 3 sigma."""
    if sigma_cells <= 0:
        return np.array([1.0])
    r = int(math.floor(3.0 * sigma_cells + 1e-12))
    k = np.arange(-r, r + 1, dtype=float)
    w = np.exp(-0.5 * (k / sigma_cells) ** 2)
    return w / w.sum()


def _theta_kernel(sigma_cells: float, ntheta: int) -> np.ndarray:
    """Wrapped Gaussian on the cyclic theta axis, summed over +/- one period."""
    if sigma_cells <= 0:
        return np.array([1.0])
    r = int(math.floor(3.0 * sigma_cells + 1e-12))
    k = np.arange(-r, r + 1, dtype=float)
    w = np.zeros_like(k)
    for m in (-1, 0, 1):
        w += np.exp(-0.5 * ((k + m * ntheta) / sigma_cells) ** 2)
    return w / w.sum()


def _uv_kernels(grid: PoseGrid, unc: UncertaintyModel):
    """Per-axis (u, v) kernels for the isotropic case, or a joint 2-D kernel
    (kv, ku) for a full covariance."""
    if unc.cov_uv is None:
        k = _axis_kernel(unc.sigma_uv / grid.cell_uv)
        return k, k, None
    cov = unc.cov_uv
    if not cov.any():
        return np.array([1.0]), np.array([1.0]), None
    su = math.sqrt(max(cov[0, 0], 0.0)) / grid.cell_uv
    sv = math.sqrt(max(cov[1, 1], 0.0)) / grid.cell_uv
    ru = int(math.floor(3.0 * su + 1e-12))
    rv = int(math.floor(3.0 * sv + 1e-12))
    cinv = np.linalg.pinv(cov)
    du = np.arange(-ru, ru + 1, dtype=float) * grid.cell_uv
    dv = np.arange(-rv, rv + 1, dtype=float) * grid.cell_uv
    uu, vv = np.meshgrid(du, dv)  # (kv, ku)
    quad = cinv[0, 0] * uu * uu + 2 * cinv[0, 1] * uu * vv + cinv[1, 1] * vv * vv
    w = np.exp(-0.5 * quad)
    return None, None, w / w.sum()


def gaussian_kernel(grid: PoseGrid, unc: UncertaintyModel) -> np.ndarray:
    """Truncated, normalized Gaussian kernel over (theta, v, u) cell offsets.

    Sampled at cell centers, truncated at 3 sigma per axis, and normalized to
    sum to 1.  Zero uncertainty gives the 1x1x1 delta kernel.
    """
    kt = _theta_kernel(unc.sigma_theta / grid.cell_theta, grid.ntheta)
    ku, kv, kuv = _uv_kernels(grid, unc)
    if kuv is None:
        ker = np.einsum("t,v,u->tvu", kt, kv, ku)
    else:
        ker = kt[:, None, None] * kuv[None, :, :]
    return ker / ker.sum()


def _shift_zero(vol: np.ndarray, k: int, axis: int) -> np.ndarray:
    """out[i] = vol[i + k] along `axis`, zero where i + k falls outside."""
    if k == 0:
        return vol
    n = vol.shape[axis]
    out = np.zeros_like(vol)
    if abs(k) >= n:
        return out
    src = [slice(None)] * vol.ndim
    dst = [slice(None)] * vol.ndim
    if k > 0:
        dst[axis], src[axis] = slice(0, n - k), slice(k, n)
    else:
        dst[axis], src[axis] = slice(-k, n), slice(0, n + k)
    out[tuple(dst)] = vol[tuple(src)]
    return out


def smooth(f: GraspFunction, unc: UncertaintyModel) -> GraspFunction:
    """Convolve the grasp function with the pose-uncertainty Gaussian.

    theta wraps cyclically; (u, v) are zero padded.  The isotropic case runs
    as three 1-D passes (theta, v, u); a full (u, v) covariance uses the
    joint 2-D kernel.  Summation order is fixed so theta shifts commute with
    smoothing bitwise.
    """
    grid = f.grid
    kt = _theta_kernel(unc.sigma_theta / grid.cell_theta, grid.ntheta)
    ku, kv, kuv = _uv_kernels(grid, unc)
    rt = len(kt) // 2

    vol = f.volume()
    acc = np.zeros_like(vol)
    for a, w in enumerate(kt):
        acc += w * np.roll(vol, -(a - rt), axis=0)
    vol = acc

    if kuv is None:
        rv = len(kv) // 2
        acc = np.zeros_like(vol)
        for a, w in enumerate(kv):
            acc += w * _shift_zero(vol, a - rv, 1)
        vol = acc
        ru = len(ku) // 2
        acc = np.zeros_like(vol)
        for a, w in enumerate(ku):
            acc += w * _shift_zero(vol, a - ru, 2)
        vol = acc
    else:
        rv = kuv.shape[0] // 2
        ru = kuv.shape[1] // 2
        acc = np.zeros_like(vol)
        for b in range(kuv.shape[0]):
            sv = _shift_zero(vol, b - rv, 1)
            for c in range(kuv.shape[1]):
                acc += kuv[b, c] * _shift_zero(sv, c - ru, 2)
        vol = acc

    return GraspFunction(grid, np.clip(vol.ravel(), 0.0, 1.0),
                         provenance="smoothed", seed=f.seed, uncertainty=unc)


def _snap(x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    r = np.rint(x)
    return np.where(np.abs(x - r) < tol, r, x)


def interpolate_many(f: GraspFunction, u: np.ndarray, v: np.ndarray,
                     theta: np.ndarray) -> np.ndarray:
    """Vectorized trilinear interpolation; inputs must be in-extent in (u, v).

    Lattice corners beyond the (u, v) boundary half-cells contribute 0; theta
    wraps between the last and first slabs.
    """
    grid = f.grid
    xu = _snap((np.asarray(u, dtype=float) - grid.origin.u) / grid.cell_uv)
    xv = _snap((np.asarray(v, dtype=float) - grid.origin.v) / grid.cell_uv)
    xt = _snap((np.asarray(theta, dtype=float) - grid.origin.theta) / grid.cell_theta)
    xt = xt % grid.ntheta

    vol = f.volume()
    volp = np.zeros((grid.ntheta, grid.nv + 2, grid.nu + 2))
    volp[:, 1:-1, 1:-1] = vol

    iu = np.floor(xu).astype(int)
    iv = np.floor(xv).astype(int)
    it = np.floor(xt).astype(int) % grid.ntheta
    fu = xu - np.floor(xu)
    fv = xv - np.floor(xv)
    ft = xt - np.floor(xt)
    iu0 = np.clip(iu + 1, 0, grid.nu + 1)
    iu1 = np.clip(iu + 2, 0, grid.nu + 1)
    iv0 = np.clip(iv + 1, 0, grid.nv + 1)
    iv1 = np.clip(iv + 2, 0, grid.nv + 1)
    it1 = (it + 1) % grid.ntheta

    out = (
        volp[it, iv0, iu0] * (1 - ft) * (1 - fv) * (1 - fu)
        + volp[it, iv0, iu1] * (1 - ft) * (1 - fv) * fu
        + volp[it, iv1, iu0] * (1 - ft) * fv * (1 - fu)
        + volp[it, iv1, iu1] * (1 - ft) * fv * fu
        + volp[it1, iv0, iu0] * ft * (1 - fv) * (1 - fu)
        + volp[it1, iv0, iu1] * ft * (1 - fv) * fu
        + volp[it1, iv1, iu0] * ft * fv * (1 - fu)
        + volp[it1, iv1, iu1] * ft * fv * fu
    )
    return out


def interpolate(f: GraspFunction, q: Pose) -> float:
    """Trilinear interpolation at a continuous pose; exact at cell centers."""
    grid = f.grid
    tol = 1e-9 * grid.cell_uv
    ulo, uhi = grid.u_extent
    vlo, vhi = grid.v_extent
    if not (ulo - tol <= q.u <= uhi + tol):
        raise ValueError(f"u={q.u} mm outside grid extent [{ulo}, {uhi}]")
    if not (vlo - tol <= q.v <= vhi + tol):
        raise ValueError(f"v={q.v} mm outside grid extent [{vlo}, {vhi}]")
    return float(interpolate_many(f, np.array([q.u]), np.array([q.v]),
                                  np.array([q.theta]))[0])


def argmax_continuous(f: GraspFunction, refine: int = 10) -> Pose:
    """Best continuous pose: pick the best grid cell (ties to the lowest flat
    index), then search a dense (2*refine+1)^3 sub-lattice over its +/-1-cell
    neighborhood (same tie rule, theta-major order)."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    grid = f.grid
    best = int(np.argmax(f.scores))
    it, rem = divmod(best, grid.nu * grid.nv)
    iv, iu = divmod(rem, grid.nu)
    cu = grid.origin.u + iu * grid.cell_uv
    cv = grid.origin.v + iv * grid.cell_uv
    ct = grid.origin.theta + it * grid.cell_theta

    offs = np.arange(-refine, refine + 1) / refine
    dt, dv, du = np.meshgrid(offs * grid.cell_theta, offs * grid.cell_uv,
                             offs * grid.cell_uv, indexing="ij")
    uu = cu + du.ravel()
    vv = cv + dv.ravel()
    tt = ct + dt.ravel()

    ulo, uhi = grid.u_extent
    vlo, vhi = grid.v_extent
    ok = (uu >= ulo) & (uu <= uhi) & (vv >= vlo) & (vv <= vhi)
    uu, vv, tt = uu[ok], vv[ok], tt[ok]
    # ties (within fp noise of the max) resolve to the sample nearest the
    # best cell center, then by canonical pose order (theta, v, u ascending):
    # refinement only moves off the chosen cell when it strictly improves
    d2 = ((uu - cu) ** 2 + (vv - cv) ** 2) / grid.cell_uv ** 2 \
        + ((tt - ct) / grid.cell_theta) ** 2
    tcan = tt % math.pi
    order = np.lexsort((uu, vv, tcan, d2))
    uu, vv, tt = uu[order], vv[order], tt[order]
    vals = interpolate_many(f, uu, vv, tt)
    k = int(np.argmax(vals >= vals.max() - 1e-12))
    return Pose(uu[k], vv[k], tt[k])


def shift_rotate_function(grid: PoseGrid, f: GraspFunction, du: int, dv: int,
                          dtheta: int) -> GraspFunction:
    """Relabel scores for an image shifted by (du, dv) cells and rotated by
    dtheta theta-cells: theta wraps cyclically, (u, v) cells shifted in from
    outside the grid get score 0."""
    vol = np.roll(f.volume(), int(dtheta) % grid.ntheta, axis=0)
    vol = _shift_zero(vol, -int(dv), 1)
    vol = _shift_zero(vol, -int(du), 2)
    return GraspFunction(grid, vol.ravel(), provenance=f.provenance,
                         seed=f.seed, uncertainty=f.uncertainty)


def _uncertainty_to_dict(unc: UncertaintyModel | None):
    if unc is None:
        return None
    d = {"sigma_uv_mm": unc.sigma_uv, "sigma_theta_rad": unc.sigma_theta}
    if unc.cov_uv is not None:
        d["cov_uv_mm2"] = [[float(x) for x in row] for row in unc.cov_uv]
    return d


def _uncertainty_from_dict(d):
    if d is None:
        return None
    cov = d.get("cov_uv_mm2")
    return UncertaintyModel(
        sigma_uv=float(d.get("sigma_uv_mm", 0.0)),
        sigma_theta=float(d.get("sigma_theta_rad", 0.0)),
        cov_uv=np.asarray(cov, dtype=float) if cov is not None else None,
    )


def save_grasp_function(f: GraspFunction, path) -> None:
    """JSON header (grid, provenance, seed) plus flat scores in index order."""
    doc = {
        "grid": grid_to_dict(f.grid),
        "provenance": f.provenance,
        "seed": f.seed,
        "uncertainty": _uncertainty_to_dict(f.uncertainty),
        "scores": [float(s) for s in f.scores],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_grasp_function(path) -> GraspFunction:
    with open(path) as fh:
        doc = json.load(fh)
    return GraspFunction(
        grid=grid_from_dict(doc["grid"]),
        scores=np.asarray(doc["scores"], dtype=float),
        provenance=doc.get("provenance", "oracle"),
        seed=doc.get("seed"),
        uncertainty=_uncertainty_from_dict(doc.get("uncertainty")),
    )


def export_heatmaps(f: GraspFunction, directory, prefix: str = "slab") -> list:
    """Write one 16-bit PGM per theta slab (score scaled to [0, 65535])."""
    import os

    from .depth_render import DepthImage, write_pgm

    paths = []
    vol = f.volume()
    for it in range(f.grid.ntheta):
        img = DepthImage(vol[it] * 65535.0, f.grid.px_per_mm)
        path = os.path.join(directory, f"{prefix}_{it:02d}.pgm")
        write_pgm(img, path)
        paths.append(path)
    return paths
