"""Grasp-function learning and planning under gripper pose uncertainty."""

from .depth_render import (
    DepthImage,
    NoiseParams,
    apply_noise,
    inpaint_zeros,
    read_pgm,
    render_depth,
    resize_bilinear,
    write_pgm,
)
from .errors import ConfigurationError, ContentError, GraspfnError, TrainingError
from .grasp_function import (
    GraspFunction,
    UncertaintyModel,
    argmax_continuous,
    gaussian_kernel,
    interpolate,
    load_grasp_function,
    save_grasp_function,
    shift_rotate_function,
    smooth,
)
from .grasp_oracle import (
    GripperSpec,
    attempt_grasp,
    attempt_grasp_many,
    compute_grasp_function,
    score_pose,
)
from .planner_eval import (
    EvalConfig,
    EvalResult,
    best_grasp_plan,
    centroid_plan,
    robust_best_grasp_plan,
    run_sweep,
    sample_achieved_pose,
)
from .pose_grid import (
    CalibrationChain,
    ImagePlaneLift,
    Pose,
    PoseGrid,
    desk_grid,
    image_to_robot,
    index_to_pose,
    paper_grid,
    pose_to_index,
)
from .predictor import (
    PredictorConfig,
    PredictorModel,
    TrainConfig,
    TrainingExample,
    forward,
    load_model,
    loss,
    predict_grasp_function,
    save_model,
    softmax,
    train,
)
from .scene import Scene, SceneObject, generate_object, load_scene, place_object, save_scene

__version__ = "0.1.0"
