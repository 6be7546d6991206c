"""
Typed run configuration.

The schema is a tree of attrs classes. :func:`build_config` turns the
defaults into an OmegaConf struct config, merges a YAML file and ``key=value``
overrides on top (unknown keys fail), and :func:`to_run_config` converts the
result back into a validated :class:`RunConfig`.

Defaults follow the desk-scale protocols:

- optimiser: Fromage with ``eta = 0.01``, SGD momentum 0.9, Adam ``(0.9, 0.999)``;
- schedule: exponential decay ``0.9`` per epoch for the perceptron studies;
- perturbation sweep: ``eta`` in ``[0, 0.1]`` on the input layer;
- depth sweep: 5k-example subset, 30 epochs, width 256, decay 0.95;
- learning-rate grid: ``{1e-4, 1e-3, 1e-2, 1e-1, 1}``.
"""

from __future__ import annotations

import enum
from collections.abc import Callable, Sequence
from enum import StrEnum
from pathlib import Path
from typing import Any, TypeVar, cast

import attrs
from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from .data import LossKind
from .exceptions import ConfigError
from .linalg import SpectralMethod
from .net import InitKind, Nonlinearity
from .optim import OptimizerKind, ScheduleKind

T = TypeVar("T")

_to_bool = attrs.converters.to_bool


def _optional(convert: Callable[[Any], T]) -> Callable[[Any], T | None]:
    return lambda v: None if v is None else convert(v)


def _list_of(convert: Callable[[Any], T]) -> Callable[[Any], list[T]]:
    return lambda v: [convert(x) for x in v]


def _section(cls: type[T]) -> Callable[[Any], T]:
    def convert(value: Any) -> T:
        if isinstance(value, cls):
            return value
        return cls(**dict(value))

    return convert


def _nonlinearity(value: Any) -> str:
    return str(Nonlinearity.parse(str(value)))


class DatasetKind(StrEnum):
    MNIST = "mnist"
    SYNTHETIC = "synthetic"


class LrMetric(StrEnum):
    FINAL_TRAIN_LOSS = "final_train_loss"
    FINAL_TRAIN_ERROR = "final_train_error"


@attrs.define(kw_only=True)
class DatasetSection:
    """
    Training data.

    ``mnist`` reads the four IDX files; ``synthetic`` draws Gaussian classes
    (the test split is a second draw of ``test_per_class`` examples per class).
    """

    kind: DatasetKind = attrs.field(default=DatasetKind.SYNTHETIC, converter=DatasetKind)
    images_path: str | None = attrs.field(default=None, converter=_optional(str))
    labels_path: str | None = attrs.field(default=None, converter=_optional(str))
    test_images_path: str | None = attrs.field(default=None, converter=_optional(str))
    test_labels_path: str | None = attrs.field(default=None, converter=_optional(str))
    subset: int | None = attrs.field(default=1000, converter=_optional(int))
    num_classes: int = attrs.field(default=10, converter=int)
    input_dim: int = attrs.field(default=64, converter=int)
    per_class: int = attrs.field(default=100, converter=int)
    test_per_class: int = attrs.field(default=0, converter=int)
    separation: float = attrs.field(default=3.0, converter=float)
    loss: LossKind = attrs.field(default=LossKind.SOFTMAX_CROSS_ENTROPY, converter=LossKind)


@attrs.define(kw_only=True)
class ModelSection:
    depth: int = attrs.field(default=2, converter=int)
    width: int = attrs.field(default=64, converter=int)
    nonlinearity: str = attrs.field(default="relu", converter=_nonlinearity)
    use_final_nonlinearity: bool = attrs.field(default=False, converter=_to_bool)
    init: InitKind = attrs.field(default=InitKind.GLOROT_UNIFORM, converter=InitKind)
    init_scale: float = attrs.field(default=1.0, converter=float)
    bias: bool = attrs.field(default=False, converter=_to_bool)

    @bias.validator
    def _no_bias(self, attribute: attrs.Attribute[bool], value: bool) -> None:
        if value:
            raise ValueError("model.bias: networks in fromage-lab are bias-free")

    @depth.validator
    def _positive_depth(self, attribute: attrs.Attribute[int], value: int) -> None:
        if value < 1:
            raise ValueError(f"model.depth must be at least 1, got {value}")


@attrs.define(kw_only=True)
class OptimizerSection:
    kind: OptimizerKind = attrs.field(default=OptimizerKind.FROMAGE, converter=OptimizerKind)
    eta: float = attrs.field(default=0.01, converter=float)
    momentum: float = attrs.field(default=0.9, converter=float)
    beta1: float = attrs.field(default=0.9, converter=float)
    beta2: float = attrs.field(default=0.999, converter=float)
    adam_epsilon: float = attrs.field(default=1e-8, converter=float)
    weight_decay: float = attrs.field(default=0.0, converter=float)
    epsilon_floor: float = attrs.field(default=1e-12, converter=float)
    clamp: bool = attrs.field(default=False, converter=_to_bool)

    def hyperparams(self) -> dict[str, float]:
        return {
            "momentum": self.momentum,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "weight_decay": self.weight_decay,
            "epsilon_floor": self.epsilon_floor,
        }


@attrs.define(kw_only=True)
class ScheduleSection:
    kind: ScheduleKind = attrs.field(default=ScheduleKind.EXPONENTIAL, converter=ScheduleKind)
    gamma: float = attrs.field(default=0.9, converter=float)
    factor: float = attrs.field(default=0.1, converter=float)
    patience: int = attrs.field(default=5, converter=int)
    threshold: float = attrs.field(default=1e-3, converter=float)
    milestones: list[int] = attrs.field(factory=list, converter=_list_of(int))


@attrs.define(kw_only=True)
class TrainingSection:
    """
    Training loop settings.

    ``checkpoint_epochs`` lists completed-epoch counts to checkpoint at; the
    initial and final networks are always saved. ``snapshots`` adds ten step
    checkpoints, half inside the first epoch, for depth <= 2, and one per epoch
    for deeper networks.
    """

    epochs: int = attrs.field(default=10, converter=int)
    batch_size: int = attrs.field(default=250, converter=int)
    checkpoint_epochs: list[int] = attrs.field(factory=list, converter=_list_of(int))
    snapshots: bool = attrs.field(default=False, converter=_to_bool)
    record_wall_time: bool = attrs.field(default=False, converter=_to_bool)
    divergence_accuracy: float = attrs.field(default=0.15, converter=float)
    divergence_patience: int = attrs.field(default=3, converter=int)


@attrs.define(kw_only=True)
class PerturbSection:
    checkpoints: list[str] = attrs.field(factory=list, converter=_list_of(str))
    etas: list[float] = attrs.field(
        factory=lambda: [0.0, 0.001, 0.01, 0.05, 0.1], converter=_list_of(float)
    )
    layer: int = attrs.field(default=0, converter=int)


@attrs.define(kw_only=True)
class NormGrowthSection:
    steps: int = attrs.field(default=10_000, converter=int)
    eta: float = attrs.field(default=0.01, converter=float)
    with_prefactor: bool = attrs.field(default=True, converter=_to_bool)
    rows: int = attrs.field(default=16, converter=int)
    cols: int = attrs.field(default=16, converter=int)


def _default_depth_grid() -> dict[str, list[float]]:
    return {"fromage": [0.1, 0.01, 0.001], "sgd": [1.0, 0.1, 0.01]}


def _eta_grid(value: Any) -> dict[str, list[float]]:
    return {str(OptimizerKind(k)): [float(e) for e in v] for k, v in dict(value).items()}


@attrs.define(kw_only=True)
class DepthSweepSection:
    """
    Depth x optimiser x eta sweep. ``full_fidelity`` switches to width 784,
    100 epochs, the full dataset and depths up to 50.
    """

    depths: list[int] = attrs.field(factory=lambda: [2, 8, 16, 32], converter=_list_of(int))
    grid: dict[str, list[float]] = attrs.field(factory=_default_depth_grid, converter=_eta_grid)
    width: int = attrs.field(default=256, converter=int)
    epochs: int = attrs.field(default=30, converter=int)
    subset: int | None = attrs.field(default=5000, converter=_optional(int))
    gamma: float = attrs.field(default=0.95, converter=float)
    full_fidelity: bool = attrs.field(default=False, converter=_to_bool)
    full_fidelity_depths: list[int] = attrs.field(
        factory=lambda: [2, 10, 20, 30, 40, 50], converter=_list_of(int)
    )
    workers: int = attrs.field(default=1, converter=int)


@attrs.define(kw_only=True)
class VerifyBoundsSection:
    """
    Randomised bound suites: ``scalar`` (product of two scalars), ``functional``,
    ``jacobian``, ``conditioning`` and ``descent`` (loss change of a Fromage step).
    ``bound_scale`` multiplies every bound before the comparison; values below
    one inject faults into the positive bounds. The descent bound is usually
    negative, so scaling it down loosens it.
    """

    trials: int = attrs.field(default=1000, converter=int)
    depths: list[int] = attrs.field(factory=lambda: [1, 2, 4, 8], converter=_list_of(int))
    nonlinearities: list[str] = attrs.field(
        factory=lambda: ["leaky_relu(0.25)", "leaky_relu(0.5)", "leaky_relu(1)"],
        converter=_list_of(_nonlinearity),
    )
    relative_sizes: list[float] = attrs.field(
        factory=lambda: [0.001, 0.01, 0.1], converter=_list_of(float)
    )
    width: int = attrs.field(default=8, converter=int)
    suites: list[str] = attrs.field(
        factory=lambda: ["scalar", "functional", "jacobian", "conditioning", "descent"], converter=_list_of(str)
    )
    bound_scale: float = attrs.field(default=1.0, converter=float)
    method: str = attrs.field(default="lapack")
    workers: int = attrs.field(default=1, converter=int)

    @method.validator
    def _check_method(self, attribute: attrs.Attribute[str], value: str) -> None:
        if value not in ("lapack", "jacobi"):
            raise ValueError(f"verify_bounds.method must be lapack or jacobi, got {value!r}")

    @property
    def spectral_method(self) -> SpectralMethod:
        return cast(SpectralMethod, self.method)


@attrs.define(kw_only=True)
class LrGridSection:
    etas: list[float] = attrs.field(
        factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1, 1.0], converter=_list_of(float)
    )
    optimizers: list[str] = attrs.field(
        factory=lambda: ["fromage"], converter=_list_of(lambda v: str(OptimizerKind(v)))
    )
    epochs: int = attrs.field(default=5, converter=int)
    metric: LrMetric = attrs.field(default=LrMetric.FINAL_TRAIN_LOSS, converter=LrMetric)
    workers: int = attrs.field(default=1, converter=int)


@attrs.define(kw_only=True)
class DescentCheckSection:
    checkpoint: str | None = attrs.field(default=None, converter=_optional(str))
    trials: int = attrs.field(default=100, converter=int)
    fraction: float = attrs.field(default=0.5, converter=float)
    cos_theta: float = attrs.field(default=1.0, converter=float)
    batch_size: int = attrs.field(default=250, converter=int)
    required_fraction: float = attrs.field(default=0.95, converter=float)


@attrs.define(kw_only=True)
class RunConfig:
    """Everything a command needs; the seed is recorded in every output."""

    seed: int = attrs.field(default=0, converter=int)
    label: str | None = attrs.field(default=None, converter=_optional(str))
    output_dir: str | None = attrs.field(default=None, converter=_optional(str))
    dataset: DatasetSection = attrs.field(factory=DatasetSection, converter=_section(DatasetSection))
    model: ModelSection = attrs.field(factory=ModelSection, converter=_section(ModelSection))
    optimizer: OptimizerSection = attrs.field(factory=OptimizerSection, converter=_section(OptimizerSection))
    schedule: ScheduleSection = attrs.field(factory=ScheduleSection, converter=_section(ScheduleSection))
    training: TrainingSection = attrs.field(factory=TrainingSection, converter=_section(TrainingSection))
    perturb: PerturbSection = attrs.field(factory=PerturbSection, converter=_section(PerturbSection))
    norm_growth: NormGrowthSection = attrs.field(factory=NormGrowthSection, converter=_section(NormGrowthSection))
    depth_sweep: DepthSweepSection = attrs.field(factory=DepthSweepSection, converter=_section(DepthSweepSection))
    verify_bounds: VerifyBoundsSection = attrs.field(
        factory=VerifyBoundsSection, converter=_section(VerifyBoundsSection)
    )
    lr_grid: LrGridSection = attrs.field(factory=LrGridSection, converter=_section(LrGridSection))
    descent_check: DescentCheckSection = attrs.field(
        factory=DescentCheckSection, converter=_section(DescentCheckSection)
    )

    def to_dict(self) -> dict[str, Any]:
        return attrs.asdict(self, value_serializer=_plain)


def _plain(instance: Any, attribute: Any, value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return list(value)
    return value


def default_config() -> DictConfig:
    """Schema defaults as a struct-mode OmegaConf config."""
    cfg = OmegaConf.create(RunConfig().to_dict())
    OmegaConf.set_struct(cfg, True)
    # Optimisers may be added to the depth-sweep grid.
    OmegaConf.set_struct(cfg.depth_sweep.grid, False)
    return cfg


def build_config(
    config_path: str | Path | None = None,
    overrides: Sequence[str] = (),
) -> DictConfig:
    """
    Merge defaults, an optional YAML file and dot-list overrides.

    Raises
    ------
    ConfigError
        If the file is missing or unreadable, or a key is unknown.
    """
    cfg = default_config()
    sources: list[Any] = []
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"configuration file not found: {path}")
        try:
            sources.append(OmegaConf.load(path))
        except (OmegaConfBaseException, OSError, ValueError) as e:
            raise ConfigError(f"{path}: {e}") from e
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' must look like key=value")
    if overrides:
        try:
            sources.append(OmegaConf.from_dotlist(list(overrides)))
        except OmegaConfBaseException as e:
            raise ConfigError(f"invalid override: {e}") from e
    try:
        merged = OmegaConf.merge(cfg, *sources)
    except OmegaConfBaseException as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return cast(DictConfig, merged)


def to_run_config(cfg: DictConfig) -> RunConfig:
    """Validate a merged config and convert it to :class:`RunConfig`."""
    data = cast(dict[str, Any], OmegaConf.to_container(cfg, resolve=True))
    try:
        return RunConfig(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def to_yaml(config: RunConfig | DictConfig) -> str:
    if isinstance(config, RunConfig):
        return OmegaConf.to_yaml(OmegaConf.create(config.to_dict()))
    return OmegaConf.to_yaml(config)
