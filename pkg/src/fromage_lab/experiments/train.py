"""
Training loop shared by ``train`` and the sweep commands.

One epoch draws a seeded permutation of the training set, steps the optimiser
on every batch, then evaluates the whole training set (and the test split when
there is one) and appends a row to the run record.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from pathlib import Path
from typing import Any

import attrs
import numpy as np

from ..checkpoint import save_checkpoint
from ..data import Dataset, batches, load_mnist_idx, synthetic_gaussian_classes
from ..exceptions import ConfigError, NonFiniteError
from ..linalg import frobenius_norm
from ..net import Mlp, MlpConfig, Nonlinearity, evaluate, loss_and_gradients
from ..optim import OptimizerState, Schedule, optimizer_step, schedule_eta
from ..records import CsvRecorder, RunStatus
from ..schema import DatasetKind, DatasetSection, RunConfig
from .pool import derive_seed

logger = logging.getLogger(__name__)

SNAPSHOT_COUNT = 10
TRAIN_CSV = "train.csv"


def train_columns(depth: int) -> list[str]:
    """Fixed column set of ``train.csv`` for a network of ``depth`` layers."""
    return [
        "epoch",
        "step",
        "eta",
        "train_loss",
        "train_accuracy",
        "test_loss",
        "test_accuracy",
        *[f"weight_norm_{k}" for k in range(depth)],
        *[f"relative_update_{k}" for k in range(depth)],
        "wall_time",
        "status",
    ]


def _existing(path: str | None, key: str) -> Path:
    if path is None:
        raise ConfigError(f"{key} is required for an mnist dataset")
    resolved = Path(path).expanduser()
    if not resolved.exists():
        raise ConfigError(f"{key}: file not found: {resolved}")
    return resolved


def load_dataset(section: DatasetSection, seed: int) -> tuple[Dataset, Dataset | None]:
    """
    Build the training set and the optional test split described by ``section``.

    Raises
    ------
    ConfigError
        If an MNIST path is missing or does not exist.
    """
    if section.kind is DatasetKind.MNIST:
        train = load_mnist_idx(
            _existing(section.images_path, "dataset.images_path"),
            _existing(section.labels_path, "dataset.labels_path"),
        )
        if section.subset is not None:
            train = train.subset(section.subset, seed)
        test = None
        if section.test_images_path is not None or section.test_labels_path is not None:
            test = load_mnist_idx(
                _existing(section.test_images_path, "dataset.test_images_path"),
                _existing(section.test_labels_path, "dataset.test_labels_path"),
            )
        return train, test

    train = synthetic_gaussian_classes(
        section.num_classes, section.input_dim, section.per_class, section.separation, seed
    )
    if section.subset is not None:
        train = train.subset(section.subset, seed)
    test = None
    if section.test_per_class > 0:
        test = synthetic_gaussian_classes(
            section.num_classes, section.input_dim, section.test_per_class, section.separation, seed + 1
        )
    return train, test


def build_network(config: RunConfig, dataset: Dataset, *, seed: int | None = None) -> Mlp:
    model = config.model
    mlp_config = MlpConfig.uniform(
        input_dim=dataset.dim,
        width=model.width,
        depth=model.depth,
        output_dim=dataset.num_classes,
        nonlinearity=Nonlinearity.parse(model.nonlinearity),
        use_final_nonlinearity=model.use_final_nonlinearity,
        init=model.init,
        init_scale=model.init_scale,
        seed=config.seed if seed is None else seed,
    )
    return Mlp.initialize(mlp_config)


def snapshot_steps(depth: int, epochs: int, steps_per_epoch: int, count: int = SNAPSHOT_COUNT) -> list[int]:
    """
    Global step numbers at which to save snapshot checkpoints.

    Networks of depth two or less change fastest early on, so half of their
    snapshots fall inside the first epoch. Deeper networks get one snapshot at
    the end of every epoch, whatever ``count`` says.
    """
    total = epochs * steps_per_epoch
    if total == 0:
        return []
    if depth <= 2:
        early = count // 2
        first = np.linspace(0, steps_per_epoch, early + 1)[1:]
        late = np.linspace(steps_per_epoch, total, count - early + 1)[1:]
        steps = np.concatenate([first, late])
    else:
        steps = np.arange(1, epochs + 1) * steps_per_epoch
    return sorted({max(1, int(round(s))) for s in steps})


@attrs.define(kw_only=True, frozen=True, eq=False)
class TrainingResult:
    net: Mlp
    status: RunStatus
    rows: tuple[dict[str, Any], ...]
    checkpoints: tuple[Path, ...] = ()

    @property
    def epochs_completed(self) -> int:
        return sum(1 for row in self.rows if row["status"] == RunStatus.OK)

    @property
    def final_loss(self) -> float:
        return float(self.rows[-1]["train_loss"]) if self.rows else math.nan

    @property
    def final_accuracy(self) -> float:
        return float(self.rows[-1]["train_accuracy"]) if self.rows else math.nan

    @property
    def diverged(self) -> bool:
        return self.status is RunStatus.DIVERGED


def _schedule(config: RunConfig) -> Schedule:
    s = config.schedule
    return Schedule(
        kind=s.kind,
        gamma=s.gamma,
        factor=s.factor,
        patience=s.patience,
        threshold=s.threshold,
        milestones=tuple(s.milestones),
    )


def _accuracy_collapsed(accuracies: list[float], epochs: int, floor: float, patience: int) -> bool:
    """Accuracy stayed below ``floor`` for ``patience`` epochs in the second half."""
    tail = [a for i, a in enumerate(accuracies) if 2 * (i + 1) >= epochs]
    return len(tail) >= patience and all(a < floor for a in tail[-patience:])


def train(
    config: RunConfig,
    dataset: Dataset,
    *,
    test: Dataset | None = None,
    net: Mlp | None = None,
    run_dir: str | Path | None = None,
    on_epoch: Callable[[dict[str, Any]], None] | None = None,
) -> TrainingResult:
    """
    Train ``net`` (or a fresh network built from ``config``) on ``dataset``.

    Parameters
    ----------
    config : RunConfig
        Optimiser, schedule and loop settings.
    dataset, test : Dataset
        Training set and optional held-out split.
    net : Mlp, optional
        Starting network; built from ``config.model`` when omitted.
    run_dir : path, optional
        When given, ``train.csv`` and checkpoints are written there.
    on_epoch : callable, optional
        Called with every record row as it is produced.

    Returns
    -------
    TrainingResult
        Final network, status and record rows. A non-finite loss or a
        collapsed accuracy ends the run with a ``diverged`` row.
    """
    net = build_network(config, dataset) if net is None else net
    if net.config.widths[0] != dataset.dim:
        raise ConfigError(f"network expects {net.config.widths[0]} inputs, dataset has {dataset.dim}")
    opt = config.optimizer
    train_cfg = config.training
    loss_kind = config.dataset.loss
    schedule = _schedule(config)
    state = OptimizerState.create(opt.kind, opt.eta, net, clamp=opt.clamp, **opt.hyperparams())

    run_path = Path(run_dir) if run_dir is not None else None
    recorder: CsvRecorder | None = None
    checkpoints: list[Path] = []
    if run_path is not None:
        recorder = CsvRecorder(run_path / TRAIN_CSV, train_columns(net.depth)).open()
        checkpoints.append(save_checkpoint(net, run_path / "epoch-000.frmg"))

    steps_per_epoch = math.ceil(dataset.size / train_cfg.batch_size)
    snapshots = set()
    if run_path is not None and train_cfg.snapshots:
        snapshots = set(snapshot_steps(net.depth, train_cfg.epochs, steps_per_epoch))
    checkpoint_epochs = set(train_cfg.checkpoint_epochs)

    full = dataset.full_batch()
    test_batch = test.full_batch() if test is not None else None
    history: list[float] = []
    accuracies: list[float] = []
    rows: list[dict[str, Any]] = []
    status = RunStatus.COMPLETED
    step = 0
    start = time.perf_counter()

    def emit(row: dict[str, Any]) -> None:
        rows.append(row)
        if recorder is not None:
            recorder.write(row)
        if on_epoch is not None:
            on_epoch(row)

    try:
        for epoch in range(train_cfg.epochs):
            eta = schedule_eta(schedule, history, epoch, opt.eta)
            state = state.with_eta(eta)
            epoch_start = net
            diverged = False
            for batch in batches(dataset, train_cfg.batch_size, derive_seed(config.seed, epoch)):
                loss, grads = loss_and_gradients(net, batch, loss_kind)
                if not math.isfinite(loss) or not grads.is_finite():
                    diverged = True
                    break
                try:
                    net, state = optimizer_step(net, grads, state)
                except NonFiniteError:
                    diverged = True
                    break
                step += 1
                if step in snapshots and run_path is not None:
                    checkpoints.append(save_checkpoint(net, run_path / f"step-{step:06d}.frmg"))

            train_loss, train_acc = (math.nan, math.nan) if diverged else evaluate(net, full, loss_kind)
            diverged = diverged or not math.isfinite(train_loss)
            if not diverged:
                accuracies.append(train_acc)
                diverged = _accuracy_collapsed(
                    accuracies, train_cfg.epochs, train_cfg.divergence_accuracy, train_cfg.divergence_patience
                )
            test_loss = test_acc = None
            if test_batch is not None and not diverged:
                test_loss, test_acc = evaluate(net, test_batch, loss_kind)
            norms = net.weight_norms()
            relative = [
                frobenius_norm(w - w0) / frobenius_norm(w0)
                for w, w0 in zip(net.weights, epoch_start.weights, strict=True)
            ]
            row: dict[str, Any] = {
                "epoch": epoch + 1,
                "step": step,
                "eta": eta,
                "train_loss": train_loss,
                "train_accuracy": train_acc,
                "test_loss": test_loss,
                "test_accuracy": test_acc,
                **{f"weight_norm_{k}": v for k, v in enumerate(norms)},
                **{f"relative_update_{k}": v for k, v in enumerate(relative)},
                "wall_time": time.perf_counter() - start if train_cfg.record_wall_time else None,
                "status": RunStatus.DIVERGED if diverged else RunStatus.OK,
            }
            emit(row)
            if diverged:
                logger.warning(f"run diverged in epoch {epoch + 1} at step {step}")
                status = RunStatus.DIVERGED
                break
            history.append(train_loss)
            if run_path is not None and (epoch + 1) in checkpoint_epochs:
                checkpoints.append(save_checkpoint(net, run_path / f"epoch-{epoch + 1:03d}.frmg"))
    finally:
        if recorder is not None:
            recorder.close()

    if run_path is not None and status is RunStatus.COMPLETED and train_cfg.epochs > 0:
        final = run_path / f"epoch-{train_cfg.epochs:03d}.frmg"
        if final not in checkpoints:
            checkpoints.append(save_checkpoint(net, final))
    return TrainingResult(net=net, status=status, rows=tuple(rows), checkpoints=tuple(checkpoints))
