"""
fromage-lab

Layerwise-relative optimisation for multilayer perceptrons: the Fromage
optimiser next to LARS, SGD and Adam, the perturbation bounds that motivate
it, and the desk-scale experiments that exercise both.
"""

__version__ = "0.4.0"
__author__ = "fromage-lab contributors"

# Import data types
from .bounds import (
    BoundComparison,
    BoundContext,
    PerturbationSpec,
    descent_inequality_check,
    descent_threshold,
    drt_model,
    functional_bound,
    gradient_breakdown_measured,
    jacobian_bound,
    matrix_conditioning_check,
    toy_scalar_bound,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Batch, Dataset, LossKind, load_mnist_idx, synthetic_gaussian_classes

# Import exceptions
from .exceptions import (
    BoundUndefinedError,
    CheckpointError,
    ConditioningError,
    ConfigError,
    ConvergenceError,
    EmptyBatchError,
    FromageLabError,
    IdxFormatError,
    LabelRangeError,
    NonFiniteError,
    ShapeMismatchError,
    TransmissionError,
    ZeroGradientError,
)
from .linalg import ConditionReport, condition_number, frobenius_norm, singular_extremes
from .net import (
    GradientSet,
    Mlp,
    MlpConfig,
    Nonlinearity,
    forward,
    jacobian_layer_to_output,
    loss_and_gradients,
    perturb,
)
from .optim import (
    OptimizerKind,
    OptimizerState,
    Schedule,
    ScheduleKind,
    adam_step,
    apply_norm_clamp,
    fromage_step,
    lars_step,
    optimizer_step,
    schedule_eta,
    sgd_step,
)
from .schema import RunConfig

__all__ = [
    "__version__",
    # Data types
    "Batch",
    "BoundComparison",
    "BoundContext",
    "ConditionReport",
    "Dataset",
    "GradientSet",
    "LossKind",
    "Mlp",
    "MlpConfig",
    "Nonlinearity",
    "OptimizerKind",
    "OptimizerState",
    "PerturbationSpec",
    "RunConfig",
    "Schedule",
    "ScheduleKind",
    # Operations
    "adam_step",
    "apply_norm_clamp",
    "condition_number",
    "descent_inequality_check",
    "descent_threshold",
    "drt_model",
    "forward",
    "frobenius_norm",
    "fromage_step",
    "functional_bound",
    "gradient_breakdown_measured",
    "jacobian_bound",
    "jacobian_layer_to_output",
    "lars_step",
    "load_checkpoint",
    "load_mnist_idx",
    "loss_and_gradients",
    "matrix_conditioning_check",
    "optimizer_step",
    "perturb",
    "save_checkpoint",
    "schedule_eta",
    "sgd_step",
    "singular_extremes",
    "synthetic_gaussian_classes",
    "toy_scalar_bound",
    # Exceptions
    "BoundUndefinedError",
    "CheckpointError",
    "ConditioningError",
    "ConfigError",
    "ConvergenceError",
    "EmptyBatchError",
    "FromageLabError",
    "IdxFormatError",
    "LabelRangeError",
    "NonFiniteError",
    "ShapeMismatchError",
    "TransmissionError",
    "ZeroGradientError",
]
