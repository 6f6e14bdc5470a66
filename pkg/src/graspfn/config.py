"""JSON run configuration: one document drives generate / train / plan /
evaluate.  Field names carry units (_mm, _deg, _px); every section has
defaults, so an empty document is a valid desk-scale setup.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

from .depth_render import NoiseParams
from .errors import ConfigurationError
from .grasp_function import UncertaintyModel
from .grasp_oracle import GripperSpec
from .pose_grid import PoseGrid, desk_grid, paper_grid
from .predictor import PredictorConfig, TrainConfig

GRID_PRESETS = {"desk": desk_grid, "paper": paper_grid}


@dataclass
class EvalSettings:
    object_count: int = 100
    object_seeds: tuple | None = None
    sigma_uv_mm: tuple = (5.0, 10.0, 15.0, 20.0)
    sigma_theta_deg: tuple = (10.0, 20.0, 30.0, 40.0)
    trials: int = 20
    source: str = "oracle"
    methods: tuple = ("centroid", "best", "robust")
    model_path: str | None = None

    def seeds(self) -> tuple:
        if self.object_seeds is not None:
            return tuple(self.object_seeds)
        return tuple(range(self.object_count))


@dataclass
class RunConfig:
    master_seed: int = 0
    grid: PoseGrid = field(default_factory=desk_grid)
    gripper: GripperSpec = field(default_factory=GripperSpec)
    noise: NoiseParams = field(default_factory=NoiseParams)
    uncertainty: UncertaintyModel = field(default_factory=UncertaintyModel)
    plane_z_mm: float = 600.0
    camera_height_mm: float = 600.0
    inpaint_radius_px: int = 5
    refine: int = 10
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self):
        if self.train.grid is None:
            self.train = dataclasses.replace(self.train, predictor=self.predictor,
                                             grid=self.grid)


def _section(doc: dict, name: str, allowed: set) -> dict:
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigurationError(f"config section '{name}' must be an object")
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigurationError(
            f"config section '{name}': unknown field(s) {sorted(unknown)}")
    return sec


def _parse_grid(doc: dict) -> PoseGrid:
    sec = _section(doc, "grid",
                   {"preset", "nu", "nv", "ntheta", "cell_uv_mm", "px_per_mm"})
    preset = sec.get("preset")
    if preset is not None:
        if preset not in GRID_PRESETS:
            raise ConfigurationError(
                f"config field 'grid.preset': unknown preset '{preset}'")
        return GRID_PRESETS[preset]()
    base = desk_grid()
    return PoseGrid.centered(
        int(sec.get("nu", base.nu)),
        int(sec.get("nv", base.nv)),
        int(sec.get("ntheta", base.ntheta)),
        float(sec.get("cell_uv_mm", base.cell_uv)),
        float(sec.get("px_per_mm", base.px_per_mm)),
    )


def parse_config(doc: dict) -> RunConfig:
    top = {"master_seed", "grid", "gripper", "noise", "uncertainty", "scene",
           "inpaint_radius_px", "planner", "predictor", "train", "eval"}
    unknown = set(doc) - top
    if unknown:
        raise ConfigurationError(f"config: unknown top-level field(s) {sorted(unknown)}")

    grid = _parse_grid(doc)

    g = _section(doc, "gripper", {"finger_gap_mm", "finger_width_mm",
                                  "finger_thickness_mm", "tip_clearance_mm",
                                  "lift_height_mm", "friction_mu"})
    gripper = GripperSpec(
        finger_gap=float(g.get("finger_gap_mm", 100.0)),
        finger_width=float(g.get("finger_width_mm", 20.0)),
        finger_thickness=float(g.get("finger_thickness_mm", 10.0)),
        tip_clearance=float(g.get("tip_clearance_mm", 1.0)),
        lift_height=float(g.get("lift_height_mm", 200.0)),
        friction_mu=float(g.get("friction_mu", 0.6)),
    )

    n = _section(doc, "noise", {"sigma_p_px", "sigma_d_mm"})
    noise = NoiseParams(sigma_p=float(n.get("sigma_p_px", 1.0)),
                        sigma_d=float(n.get("sigma_d_mm", 1.5)))

    u = _section(doc, "uncertainty", {"sigma_uv_mm", "sigma_theta_deg"})
    uncertainty = UncertaintyModel(
        sigma_uv=float(u.get("sigma_uv_mm", 0.0)),
        sigma_theta=math.radians(float(u.get("sigma_theta_deg", 0.0))),
    )

    s = _section(doc, "scene", {"plane_z_mm", "camera_height_mm"})
    plane_z = float(s.get("plane_z_mm", 600.0))
    camera_height = float(s.get("camera_height_mm", plane_z))

    p = _section(doc, "planner", {"refine"})
    refine = int(p.get("refine", 10))

    pd = _section(doc, "predictor", {"input_width", "input_height",
                                     "conv_channels", "kernel_size", "fc_sizes",
                                     "depth_offset_mm", "depth_scale",
                                     "aggregation"})
    predictor = PredictorConfig(
        input_height=int(pd.get("input_height", 120)),
        input_width=int(pd.get("input_width", 160)),
        conv_channels=tuple(pd.get("conv_channels", (8, 16, 32))),
        kernel_size=int(pd.get("kernel_size", 3)),
        fc_sizes=tuple(pd.get("fc_sizes", (128,))),
        depth_offset_mm=float(pd.get("depth_offset_mm", plane_z)),
        depth_scale=float(pd.get("depth_scale", 0.01)),
        aggregation=pd.get("aggregation", "expected"),
    )

    t = _section(doc, "train", {"batch_size", "learning_rate", "steps", "seed",
                                "augment", "augment_shift_cells",
                                "augment_rotate", "class_weighting",
                                "class_weight_cap"})
    master_seed = int(doc.get("master_seed", 0))
    train = TrainConfig(
        predictor=predictor,
        grid=grid,
        batch_size=int(t.get("batch_size", 8)),
        learning_rate=float(t.get("learning_rate", 1.0)),
        steps=int(t.get("steps", 500)),
        seed=int(t.get("seed", master_seed)),
        augment=bool(t.get("augment", True)),
        augment_shift_cells=int(t.get("augment_shift_cells", 2)),
        augment_rotate=bool(t.get("augment_rotate", True)),
        class_weighting=bool(t.get("class_weighting", False)),
        class_weight_cap=float(t.get("class_weight_cap", 10.0)),
    )

    e = _section(doc, "eval", {"object_count", "object_seeds", "sigma_uv_mm",
                               "sigma_theta_deg", "trials", "source", "methods",
                               "model_path"})
    seeds = e.get("object_seeds")
    ev = EvalSettings(
        object_count=int(e.get("object_count", 100)),
        object_seeds=tuple(int(x) for x in seeds) if seeds is not None else None,
        sigma_uv_mm=tuple(float(x) for x in e.get("sigma_uv_mm", (5, 10, 15, 20))),
        sigma_theta_deg=tuple(float(x) for x in e.get("sigma_theta_deg",
                                                      (10, 20, 30, 40))),
        trials=int(e.get("trials", 20)),
        source=e.get("source", "oracle"),
        methods=tuple(e.get("methods", ("centroid", "best", "robust"))),
        model_path=e.get("model_path"),
    )

    return RunConfig(
        master_seed=master_seed,
        grid=grid,
        gripper=gripper,
        noise=noise,
        uncertainty=uncertainty,
        plane_z_mm=plane_z,
        camera_height_mm=camera_height,
        inpaint_radius_px=int(doc.get("inpaint_radius_px", 5)),
        refine=refine,
        predictor=predictor,
        train=train,
        eval=ev,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigurationError(
            f"{path}: JSON parse error at line {err.lineno}, column {err.colno}: "
            f"{err.msg}") from err
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config root must be a JSON object")
    try:
        return parse_config(doc)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"{path}: {err}") from err
