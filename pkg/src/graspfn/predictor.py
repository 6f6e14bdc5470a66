"""Convolutional grasp-score classifier built on numpy.

The network maps a depth image to six-way score-class logits for every
discrete pose: conv/max-pool stages, fully-connected stages, and a linear
head of size |Q| x 6.  Training is plain minibatch gradient descent on the
mean softmax cross-entropy over all poses, with optional shift/rotate
augmentation applied consistently to image and labels.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .depth_render import DepthImage, resize_bilinear
from .errors import ConfigurationError, TrainingError
from .grasp_function import GraspFunction, _shift_zero
from .pose_grid import PoseGrid, grid_from_dict, grid_to_dict

CLASS_VALUES = np.array([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
N_CLASSES = 6

_MAGIC = b"GFNM0001"
_VERSION = 1


@dataclass(frozen=True)
class PredictorConfig:
    """Architecture and input normalization of the score classifier."""

    input_height: int = 120
    input_width: int = 160
    conv_channels: tuple = (8, 16, 32)
    kernel_size: int = 3
    fc_sizes: tuple = (128,)
    depth_offset_mm: float = 600.0
    depth_scale: float = 0.01
    aggregation: str = "expected"  # or "max"

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_sizes", tuple(int(c) for c in self.fc_sizes))
        if self.kernel_size % 2 != 1:
            raise ConfigurationError("kernel_size must be odd")
        div = 2 ** len(self.conv_channels)
        if self.input_height % div or self.input_width % div:
            raise ConfigurationError(
                f"input {self.input_width}x{self.input_height} must be divisible "
                f"by {div} for {len(self.conv_channels)} pooling stages"
            )
        if self.aggregation not in ("expected", "max"):
            raise ConfigurationError("aggregation must be 'expected' or 'max'")


@dataclass
class TrainingExample:
    """A (noise-model applied) depth image and per-pose class labels 0..5."""

    image: DepthImage
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.labels.min() < 0 or self.labels.max() >= N_CLASSES:
            raise ValueError("labels must be class indices in 0..5")


class _Conv:
    """Stride-1 same-padding convolution via im2col and one batched GEMM."""

    def __init__(self, w, b):
        self.w = w
        self.b = b

    def _wmat(self):
        # (o, k*k*c): column index = (di*k + dj)*c + ch, matching cols layout
        o, c, k, _ = self.w.shape
        return self.w.transpose(2, 3, 1, 0).reshape(k * k * c, o).T

    def forward(self, x):
        o, c, k, _ = self.w.shape
        p = k // 2
        bsz, _, h, wd = x.shape
        self._shape = (bsz, c, h, wd)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = np.empty((bsz, k * k * c, h * wd))
        i = 0
        for di in range(k):
            for dj in range(k):
                cols[:, i * c:(i + 1) * c, :] = xp[:, :, di:di + h, dj:dj + wd].reshape(
                    bsz, c, h * wd)
                i += 1
        self._cols = cols
        y = np.matmul(self._wmat(), cols) + self.b[None, :, None]
        return y.reshape(bsz, o, h, wd)

    def backward(self, gy):
        o, c, k, _ = self.w.shape
        p = k // 2
        bsz, _, h, wd = self._shape
        gy2 = np.ascontiguousarray(gy.reshape(bsz, o, h * wd))
        flat_gy = gy2.transpose(1, 0, 2).reshape(o, bsz * h * wd)
        flat_cols = self._cols.transpose(1, 0, 2).reshape(k * k * c, bsz * h * wd)
        gwmat = flat_gy @ flat_cols.T  # (o, k*k*c)
        self.gw = gwmat.T.reshape(k, k, c, o).transpose(3, 2, 0, 1).copy()
        self.gb = gy2.sum(axis=(0, 2))

        gcols = np.matmul(self._wmat().T, gy2)  # (bsz, k*k*c, h*wd)
        gxp = np.zeros((bsz, c, h + 2 * p, wd + 2 * p))
        i = 0
        for di in range(k):
            for dj in range(k):
                gxp[:, :, di:di + h, dj:dj + wd] += gcols[:, i * c:(i + 1) * c, :].reshape(
                    bsz, c, h, wd)
                i += 1
        return gxp[:, :, p:p + h, p:p + wd]

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]


class _ReLU:
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, gy):
        return gy * self._mask

    def params(self):
        return []

    def grads(self):
        return []


class _MaxPool2:
    def forward(self, x):
        b, c, h, w = x.shape
        self._hw = (h, w)
        win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(b, c, h // 2, w // 2, 4)
        self._arg = win.argmax(axis=-1)  # ties route to the first element
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, gy):
        b, c, h2, w2 = gy.shape
        g = np.zeros((b, c, h2, w2, 4))
        np.put_along_axis(g, self._arg[..., None], gy[..., None], axis=-1)
        h, w = self._hw
        return g.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)

    def params(self):
        return []

    def grads(self):
        return []


class _Flatten:
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape)

    def params(self):
        return []

    def grads(self):
        return []


class _Dense:
    def __init__(self, w, b):
        self.w = w
        self.b = b

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, gy):
        self.gw = self._x.T @ gy
        self.gb = gy.sum(axis=0)
        return gy @ self.w.T

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.gw, self.gb]


def param_shapes(config: PredictorConfig, grid: PoseGrid) -> list:
    """Ordered (shape, kind) pairs for every parameter array."""
    shapes = []
    cin = 1
    h, w = config.input_height, config.input_width
    k = config.kernel_size
    for cout in config.conv_channels:
        shapes.append((cout, cin, k, k))
        shapes.append((cout,))
        cin = cout
        h //= 2
        w //= 2
    feat = cin * h * w
    for size in config.fc_sizes:
        shapes.append((feat, size))
        shapes.append((size,))
        feat = size
    shapes.append((feat, grid.size * N_CLASSES))
    shapes.append((grid.size * N_CLASSES,))
    return shapes


class PredictorModel:
    """Layer stack plus its parameter arrays (shared, updated in place)."""

    def __init__(self, config: PredictorConfig, grid: PoseGrid, params: list):
        self.config = config
        self.grid = grid
        expected = param_shapes(config, grid)
        got = [tuple(p.shape) for p in params]
        if got != [tuple(s) for s in expected]:
            raise ConfigurationError("parameter shapes do not match the architecture")
        self.params = params
        self.layers = []
        i = 0
        for _ in config.conv_channels:
            self.layers += [_Conv(params[i], params[i + 1]), _ReLU(), _MaxPool2()]
            i += 2
        self.layers.append(_Flatten())
        for _ in config.fc_sizes:
            self.layers += [_Dense(params[i], params[i + 1]), _ReLU()]
            i += 2
        self.layers.append(_Dense(params[i], params[i + 1]))

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """x: (B, 1, H, W) normalized input -> (B, |Q|, 6) logits."""
        for layer in self.layers:
            x = layer.forward(x)
        return x.reshape(x.shape[0], self.grid.size, N_CLASSES)

    def backward_batch(self, dlogits: np.ndarray) -> None:
        g = dlogits.reshape(dlogits.shape[0], -1)
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def grads(self) -> list:
        out = []
        for layer in self.layers:
            out += layer.grads()
        return out


def init_model(config: PredictorConfig, grid: PoseGrid, seed) -> PredictorModel:
    """Fan-in-scaled uniform weight init, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    params = []
    for shape in param_shapes(config, grid):
        if len(shape) == 1:
            params.append(np.zeros(shape))
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else int(shape[0])
            a = math.sqrt(3.0 / fan_in)
            params.append(rng.uniform(-a, a, shape))
    return PredictorModel(config, grid, params)


def normalize_image(img: DepthImage, config: PredictorConfig) -> np.ndarray:
    """(1, H, W) network input: height above the reference plane, scaled."""
    return ((config.depth_offset_mm - img.data) * config.depth_scale)[None, :, :]


def prepare_input(img: DepthImage, config: PredictorConfig) -> np.ndarray:
    if (img.height, img.width) != (config.input_height, config.input_width):
        img = resize_bilinear(img, config.input_width, config.input_height)
    return normalize_image(img, config)


def forward(model: PredictorModel, img: DepthImage) -> np.ndarray:
    """Logits (|Q|, 6) for one image; dimensions must match the model config."""
    cfg = model.config
    if (img.height, img.width) != (cfg.input_height, cfg.input_width):
        raise ConfigurationError(
            f"image is {img.width}x{img.height}, model expects "
            f"{cfg.input_width}x{cfg.input_height}"
        )
    x = normalize_image(img, cfg)[None]
    return model.forward_batch(x)[0]


def softmax(v: np.ndarray) -> np.ndarray:
    """Overflow-safe softmax along the last axis."""
    v = np.asarray(v, dtype=float)
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def loss(logits: np.ndarray, labels: np.ndarray,
         class_weights: np.ndarray | None = None) -> float:
    """Mean cross-entropy over all poses (and batch images, if batched)."""
    val, _ = loss_and_grad(logits, labels, class_weights)
    return val


def loss_and_grad(logits: np.ndarray, labels: np.ndarray,
                  class_weights: np.ndarray | None = None):
    logits = np.asarray(logits, dtype=float)
    squeeze = logits.ndim == 2
    if squeeze:
        logits = logits[None]
        labels = np.asarray(labels)[None]
    b, m, n = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(b, m)
    p = softmax(logits)
    idx_b, idx_m = np.meshgrid(np.arange(b), np.arange(m), indexing="ij")
    p_true = p[idx_b, idx_m, labels]
    nll = -np.log(np.maximum(p_true, 1e-300))
    onehot = np.zeros_like(p)
    onehot[idx_b, idx_m, labels] = 1.0
    if class_weights is None:
        val = float(nll.mean())
        dlogits = (p - onehot) / (b * m)
    else:
        w = np.asarray(class_weights, dtype=float)[labels]
        denom = w.sum()
        val = float((w * nll).sum() / denom)
        dlogits = (p - onehot) * (w / denom)[:, :, None]
    if squeeze:
        dlogits = dlogits[0]
    return val, dlogits


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; the architecture rides along in `predictor`."""

    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    grid: PoseGrid | None = None
    batch_size: int = 8
    learning_rate: float = 1.0
    steps: int = 500
    seed: int = 0
    augment: bool = False
    augment_shift_cells: int = 2
    augment_rotate: bool = True
    class_weighting: bool = False
    class_weight_cap: float = 10.0


@dataclass
class TrainResult:
    model: PredictorModel
    loss_curve: list


def shift_rotate_image(arr: np.ndarray, angle: float, du_px: float, dv_px: float,
                       fill: float = 0.0) -> np.ndarray:
    """Rotate a 2-D array by `angle` about its center, then shift by
    (du_px, dv_px) pixels; bilinear sampling, `fill` outside the frame."""
    h, w = arr.shape
    cx = (w - 1) / 2.0
    cy = (h - 1) / 2.0
    ca, sa = math.cos(angle), math.sin(angle)
    xx, yy = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    xs = xx - cx - du_px
    ys = yy - cy - dv_px
    srcx = ca * xs + sa * ys + cx
    srcy = -sa * xs + ca * ys + cy
    valid = (srcx >= 0) & (srcx <= w - 1) & (srcy >= 0) & (srcy <= h - 1)
    x0 = np.clip(np.floor(srcx).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(srcy).astype(int), 0, h - 2)
    fx = np.clip(srcx - x0, 0.0, 1.0)
    fy = np.clip(srcy - y0, 0.0, 1.0)
    val = (arr[y0, x0] * (1 - fx) * (1 - fy) + arr[y0, x0 + 1] * fx * (1 - fy)
           + arr[y0 + 1, x0] * (1 - fx) * fy + arr[y0 + 1, x0 + 1] * fx * fy)
    return np.where(valid, val, fill)


def shift_rotate_labels(labels: np.ndarray, grid: PoseGrid, du: int, dv: int,
                        dtheta: int) -> np.ndarray:
    """Class-label counterpart of shift_rotate_function (fill class 0)."""
    vol = labels.reshape(grid.ntheta, grid.nv, grid.nu)
    vol = np.roll(vol, int(dtheta) % grid.ntheta, axis=0)
    vol = _shift_zero(vol, -int(dv), 1)
    vol = _shift_zero(vol, -int(du), 2)
    return vol.ravel()


def augment_example(x: np.ndarray, labels: np.ndarray, grid: PoseGrid,
                    config: PredictorConfig, du: int, dv: int, dtheta: int):
    """Apply matching image and label transforms for one augmentation draw."""
    cell_px_x = config.input_width / grid.nu
    cell_px_y = config.input_height / grid.nv
    img = shift_rotate_image(x[0], dtheta * grid.cell_theta,
                             du * cell_px_x, dv * cell_px_y, fill=0.0)
    return img[None], shift_rotate_labels(labels, grid, du, dv, dtheta)


def make_augmented_dataset(example: TrainingExample, count: int, grid: PoseGrid,
                           config: PredictorConfig, seed: int,
                           shift_cells: int = 2, rotate: bool = True):
    """`count` (image-array, labels) variants of one example; the first is the
    identity transform. Returns a list usable as a prepared dataset."""
    base = prepare_input(example.image, config)
    rng = np.random.default_rng(seed)
    out = [(base, example.labels.copy())]
    while len(out) < count:
        du = int(rng.integers(-shift_cells, shift_cells + 1))
        dv = int(rng.integers(-shift_cells, shift_cells + 1))
        dt = int(rng.integers(0, grid.ntheta)) if rotate else 0
        out.append(augment_example(base, example.labels, grid, config, du, dv, dt))
    return out


def _class_weights(labels_list, cap: float) -> np.ndarray:
    counts = np.zeros(N_CLASSES)
    for lab in labels_list:
        counts += np.bincount(lab, minlength=N_CLASSES)
    total = counts.sum()
    with np.errstate(divide="ignore"):
        w = np.where(counts > 0, total / (N_CLASSES * np.maximum(counts, 1)), cap)
    return np.minimum(w, cap)


def train(dataset, config: TrainConfig) -> TrainResult:
    """Minibatch gradient descent; deterministic per seed (single-threaded).

    `dataset` is a sequence of TrainingExample or prepared (array, labels)
    pairs.  Raises TrainingError with the step index if the loss diverges.
    """
    if config.grid is None:
        raise ConfigurationError("TrainConfig.grid is required")
    items = list(dataset)
    if not items:
        raise ConfigurationError("training dataset is empty")
    grid = config.grid
    pcfg = config.predictor

    prepared = []
    for it in items:
        if isinstance(it, TrainingExample):
            prepared.append((prepare_input(it.image, pcfg), it.labels))
        else:
            x, lab = it
            prepared.append((np.asarray(x, dtype=float),
                             np.asarray(lab, dtype=np.int64).ravel()))
    for x, lab in prepared:
        if lab.size != grid.size:
            raise ConfigurationError("label length does not match the grid")

    weights = None
    if config.class_weighting:
        weights = _class_weights([lab for _, lab in prepared], config.class_weight_cap)

    model = init_model(pcfg, grid, [config.seed, 0])
    rng_batch = np.random.default_rng([config.seed, 1])
    rng_aug = np.random.default_rng([config.seed, 2])
    curve = []
    n = len(prepared)
    for step in range(config.steps):
        idx = rng_batch.integers(0, n, config.batch_size)
        xs = []
        ys = []
        for j in idx:
            x, lab = prepared[j]
            if config.augment:
                du = int(rng_aug.integers(-config.augment_shift_cells,
                                          config.augment_shift_cells + 1))
                dv = int(rng_aug.integers(-config.augment_shift_cells,
                                          config.augment_shift_cells + 1))
                dt = int(rng_aug.integers(0, grid.ntheta)) if config.augment_rotate else 0
                x, lab = augment_example(x, lab, grid, pcfg, du, dv, dt)
            xs.append(x)
            ys.append(lab)
        xb = np.stack(xs)
        yb = np.stack(ys)
        logits = model.forward_batch(xb)
        val, dlogits = loss_and_grad(logits, yb, weights)
        if not math.isfinite(val):
            raise TrainingError("training loss diverged", step)
        model.backward_batch(dlogits)
        for p, g in zip(model.params, model.grads()):
            p -= config.learning_rate * g
        curve.append((step, val))
    for p in model.params:
        if not np.all(np.isfinite(p)):
            raise TrainingError("non-finite weights after training", config.steps - 1)
    return TrainResult(model, curve)


def predict_grasp_function(model: PredictorModel, img: DepthImage) -> GraspFunction:
    """Per-pose score from the softmax distribution: its expected score value
    by default, or the max-probability class value when configured."""
    x = prepare_input(img, model.config)[None]
    logits = model.forward_batch(x)[0]
    p = softmax(logits)
    if model.config.aggregation == "expected":
        scores = p @ CLASS_VALUES
    else:
        scores = CLASS_VALUES[np.argmax(p, axis=1)]
    return GraspFunction(model.grid, np.clip(scores, 0.0, 1.0),
                         provenance="predictor")


def save_model(model: PredictorModel, path) -> None:
    """Binary format: magic, version, JSON architecture block, then the
    parameter arrays as contiguous little-endian float64 in order."""
    desc = {
        "config": {
            "input_height": model.config.input_height,
            "input_width": model.config.input_width,
            "conv_channels": list(model.config.conv_channels),
            "kernel_size": model.config.kernel_size,
            "fc_sizes": list(model.config.fc_sizes),
            "depth_offset_mm": model.config.depth_offset_mm,
            "depth_scale": model.config.depth_scale,
            "aggregation": model.config.aggregation,
        },
        "grid": grid_to_dict(model.grid),
    }
    blob = json.dumps(desc, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for p in model.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> PredictorModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a predictor model file")
    version, blen = struct.unpack_from("<II", raw, len(_MAGIC))
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    off = len(_MAGIC) + 8
    desc = json.loads(raw[off : off + blen].decode("utf-8"))
    off += blen
    cfg = PredictorConfig(
        input_height=desc["config"]["input_height"],
        input_width=desc["config"]["input_width"],
        conv_channels=tuple(desc["config"]["conv_channels"]),
        kernel_size=desc["config"]["kernel_size"],
        fc_sizes=tuple(desc["config"]["fc_sizes"]),
        depth_offset_mm=desc["config"]["depth_offset_mm"],
        depth_scale=desc["config"]["depth_scale"],
        aggregation=desc["config"]["aggregation"],
    )
    grid = grid_from_dict(desc["grid"])
    params = []
    for shape in param_shapes(cfg, grid):
        count = int(np.prod(shape))
        arr = np.frombuffer(raw[off : off + 8 * count], dtype="<f8").reshape(shape)
        params.append(arr.astype(float))
        off += 8 * count
    return PredictorModel(cfg, grid, params)
