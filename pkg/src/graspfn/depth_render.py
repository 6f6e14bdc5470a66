"""Synthetic depth imaging: orthographic top-down rendering, the two-part
sensor noise model, zero-pixel inpainting, and 16-bit PGM persistence.

Pixel (row i, col j) sees the workspace point
    u = (j + 0.5 - W/2) / px_per_mm,   v = (i + 0.5 - H/2) / px_per_mm
so v increases down the image.  Depth values are millimeters from the camera;
0 marks a missing measurement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContentError
from .geometry import points_in_polygon
from .pose_grid import PoseGrid
from .scene import Scene


@dataclass
class DepthImage:
    """Dense H x W depth map in millimeters; 0 = missing."""

    data: np.ndarray
    px_per_mm: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("depth data must be a 2-D array")
        if not np.all(np.isfinite(self.data)) or (self.data < 0).any():
            raise ValueError("depth values must be finite and non-negative")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def pixel_u(self) -> np.ndarray:
        return (np.arange(self.width) + 0.5 - self.width / 2) / self.px_per_mm

    def pixel_v(self) -> np.ndarray:
        return (np.arange(self.height) + 0.5 - self.height / 2) / self.px_per_mm


@dataclass(frozen=True)
class NoiseParams:
    """Gaussian pixel-localization noise (px) and depth noise (mm)."""

    sigma_p: float = 1.0
    sigma_d: float = 1.5

    def __post_init__(self):
        if self.sigma_p < 0 or self.sigma_d < 0:
            raise ValueError("noise sigmas must be >= 0")


def render_depth(scene: Scene, grid: PoseGrid) -> DepthImage:
    """Orthographic top-down render: plane depth everywhere except where the
    object footprint covers the pixel center."""
    h, w = grid.image_shape()
    data = np.full((h, w), scene.plane_z, dtype=float)
    verts = scene.object.world_footprint()
    ppm = grid.px_per_mm

    # restrict the point-in-polygon test to the footprint's pixel bounding box
    j0 = max(0, int(math.floor((verts[:, 0].min()) * ppm + w / 2 - 0.5)) - 1)
    j1 = min(w, int(math.ceil((verts[:, 0].max()) * ppm + w / 2 - 0.5)) + 2)
    i0 = max(0, int(math.floor((verts[:, 1].min()) * ppm + h / 2 - 0.5)) - 1)
    i1 = min(h, int(math.ceil((verts[:, 1].max()) * ppm + h / 2 - 0.5)) + 2)
    if j0 >= j1 or i0 >= i1:
        return DepthImage(data, ppm)

    us = (np.arange(j0, j1) + 0.5 - w / 2) / ppm
    vs = (np.arange(i0, i1) + 0.5 - h / 2) / ppm
    uu, vv = np.meshgrid(us, vs)
    pts = np.stack([uu.ravel(), vv.ravel()], axis=1)
    inside = points_in_polygon(pts, verts).reshape(uu.shape)
    block = data[i0:i1, j0:j1]
    block[inside] = scene.plane_z - scene.object.height
    return DepthImage(data, ppm)


def _bilinear(data: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear read at continuous pixel coordinates, clamped to the image."""
    h, w = data.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2) if w > 1 else np.zeros_like(x, dtype=int)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2) if h > 1 else np.zeros_like(y, dtype=int)
    fx = x - x0
    fy = y - y0
    d00 = data[y0, x0]
    d01 = data[y0, np.minimum(x0 + 1, w - 1)]
    d10 = data[np.minimum(y0 + 1, h - 1), x0]
    d11 = data[np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
    return (d00 * (1 - fx) * (1 - fy) + d01 * fx * (1 - fy)
            + d10 * (1 - fx) * fy + d11 * fx * fy)


def apply_noise(img: DepthImage, params: NoiseParams, seed: int) -> DepthImage:
    """Two-component sensor model: each pixel reads the depth at a Gaussian
    pixel offset (bilinear, clamped at borders), then gains Gaussian depth
    noise.  Deterministic per seed."""
    if params.sigma_p == 0 and params.sigma_d == 0:
        return DepthImage(img.data.copy(), img.px_per_mm)
    rng = np.random.default_rng(seed)
    h, w = img.data.shape
    jj, ii = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    dx = rng.normal(0.0, 1.0, (h, w)) * params.sigma_p
    dy = rng.normal(0.0, 1.0, (h, w)) * params.sigma_p
    out = _bilinear(img.data, jj + dx, ii + dy)
    if params.sigma_d > 0:
        out = out + rng.normal(0.0, 1.0, (h, w)) * params.sigma_d
    return DepthImage(np.maximum(out, 0.0), img.px_per_mm)


def inpaint_zeros(img: DepthImage, radius: int = 5) -> DepthImage:
    """Replace missing (zero) pixels: the mean of the non-zero pixels within
    `radius` when there are at least two, otherwise the globally nearest
    non-zero pixel (ties broken by row-major order)."""
    data = img.data
    nonzero = data > 0
    if not nonzero.any():
        raise ContentError("cannot inpaint an all-zero depth image")
    if nonzero.all():
        return DepthImage(data.copy(), img.px_per_mm)

    h, w = data.shape
    counts = np.zeros((h, w))
    sums = np.zeros((h, w))
    r = int(radius)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx * dx + dy * dy > r * r:
                continue
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            src = (slice(ys0 + dy, ys1 + dy), slice(xs0 + dx, xs1 + dx))
            dst = (slice(ys0, ys1), slice(xs0, xs1))
            counts[dst] += nonzero[src]
            sums[dst] += data[src] * nonzero[src]

    out = data.copy()
    zeros = ~nonzero
    local = zeros & (counts >= 2)
    out[local] = sums[local] / counts[local]

    remaining = np.argwhere(zeros & ~local)
    if len(remaining):
        cand = np.argwhere(nonzero)  # row-major order, so argmin ties pick it
        for yy, xx in remaining:
            d2 = (cand[:, 0] - yy) ** 2 + (cand[:, 1] - xx) ** 2
            best = cand[np.argmin(d2)]
            out[yy, xx] = data[best[0], best[1]]
    return DepthImage(out, img.px_per_mm)


def resize_bilinear(img: DepthImage, width: int, height: int) -> DepthImage:
    """Bilinear resample to (height, width) pixels, preserving the field of
    view; px_per_mm is rescaled accordingly."""
    if (img.width, img.height) == (width, height):
        return DepthImage(img.data.copy(), img.px_per_mm)
    sx = img.width / width
    sy = img.height / height
    xs = (np.arange(width) + 0.5) * sx - 0.5
    ys = (np.arange(height) + 0.5) * sy - 0.5
    xx, yy = np.meshgrid(xs, ys)
    data = _bilinear(img.data, xx, yy)
    return DepthImage(data, img.px_per_mm * width / img.width)


def write_pgm(img: DepthImage, path) -> None:
    """16-bit binary PGM (P5, maxval 65535, big-endian), value = depth in mm."""
    vals = np.clip(np.rint(img.data), 0, 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n65535\n".encode("ascii"))
        fh.write(vals.tobytes())


def read_pgm(path, px_per_mm: float = 1.4) -> DepthImage:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 65535:
        raise ValueError(f"{path}: expected maxval 65535, got {maxval}")
    data = np.frombuffer(raw[pos : pos + 2 * width * height], dtype=">u2")
    if data.size != width * height:
        raise ValueError(f"{path}: truncated pixel data")
    return DepthImage(data.reshape(height, width).astype(float), px_per_mm)
