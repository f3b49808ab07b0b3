"""Identification of neural dynamic models for low-speed ship maneuvering.

The pipeline: measured (or synthetic) trajectories -> windowed datasets with
optional slicing/jittering augmentation -> prediction-error training of an
MLP acceleration model through Euler rollouts -> windowed test evaluation and
cross-recipe comparison.  See the README for the CLI surface.
"""

from .augmentation import (
    METHOD_JITTERING,
    METHOD_REFERENCE,
    METHOD_SLICING,
    METHOD_SLICING_JITTERING,
    NoiseSpec,
    Window,
    WindowDataset,
    jitter,
    load_dataset,
    make_dataset,
    save_dataset,
    slice_jitter,
    slice_windows,
    split_reference,
)
from .config import (
    GenerateConfig,
    RecipeSpec,
    RoleSplit,
    RunConfig,
    StudyConfig,
    default_recipes,
    load_config,
)
from .dynamics import (
    DEFAULT_DIMS,
    DynamicModel,
    MlpParameters,
    Standardizer,
    fit_standardizer,
    full_derivative,
    init_mlp,
    load_checkpoint,
    mlp_forward,
    save_checkpoint,
)
from .errors import ConfigError, DataError, DivergenceError
from .evaluation import (
    DATASET_ORDER,
    ComparisonTable,
    EvaluationReport,
    compare_runs,
    evaluate,
    write_comparison_csv,
)
from .rollout import (
    ErrorWeights,
    RolloutResult,
    dataset_loss,
    euler_path,
    euler_rollout,
    objective,
    state_error,
    trapezoid_integral,
    window_loss,
    write_error_csv,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainingRecord,
    adam_step,
    early_stop_check,
    ema_update,
    finite_difference_gradient,
    gradient_check,
    init_adam,
    minibatch_split,
    objective_gradient,
    train,
    write_training_log,
)
from .trajectory import (
    ActuatorState,
    Sample,
    ShipState,
    Trajectory,
    WindState,
    downsample,
    load_trajectory,
    numerical_acceleration,
    save_trajectory,
    wrap_angle,
)
from .truthsim import (
    ActuatorLimits,
    ManeuverScript,
    TrueWind,
    TruthModelConfig,
    WindProcessConfig,
    apparent_wind,
    generate_trajectory,
    random_maneuver,
    truth_derivative,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
