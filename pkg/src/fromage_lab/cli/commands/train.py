from __future__ import annotations

from typing import Any

import click

from ...data import PIXEL_SCALE
from ...experiments.train import TRAIN_CSV, load_dataset, train as run_training
from ...records import RunStatus, write_summary
from ...schema import DatasetKind
from ..constants import EXIT_DIVERGED
from ..options import lab_errors, run_options, start_run


def _echo_epoch(row: dict[str, Any]) -> None:
    click.echo(
        f"[TRAIN] epoch {row['epoch']:>3} step {row['step']:>6} "
        f"eta {row['eta']:.3g} loss {row['train_loss']:.5f} acc {row['train_accuracy']:.4f}"
    )


@click.command()
@run_options
@click.pass_context
def train(
    ctx: click.Context,
    config_path: str | None,
    output_dir: str | None,
    seed: int | None,
    overrides: tuple[str, ...],
) -> None:
    """Train a perceptron and record per-epoch statistics and checkpoints.

    Writes ``train.csv``, ``epoch-NNN.frmg`` checkpoints (plus snapshots when
    ``training.snapshots`` is set) and ``summary.json``. Exits with code 3 when
    the run diverges.
    """
    run = start_run("train", config_path, output_dir, seed, overrides)
    cfg = run.config
    with lab_errors("Training"):
        dataset, test = load_dataset(cfg.dataset, cfg.seed)
        click.echo(f"[TRAIN] {dataset.size} examples from {dataset.source}")
        result = run_training(cfg, dataset, test=test, run_dir=run.run_dir, on_epoch=_echo_epoch)

    write_summary(
        run.run_dir,
        command=run.command,
        seed=cfg.seed,
        config_yaml=run.config_yaml,
        status=result.status,
        epochs_completed=result.epochs_completed,
        final_train_loss=result.final_loss if result.rows else None,
        final_train_accuracy=result.final_accuracy if result.rows else None,
        checkpoints=[p.name for p in result.checkpoints],
        dataset=dataset.source,
        pixel_scaling=f"bytes / {PIXEL_SCALE:g}" if cfg.dataset.kind is DatasetKind.MNIST else None,
    )
    if result.status is RunStatus.DIVERGED:
        click.echo(f"[ERROR] Run diverged; see {run.run_dir / TRAIN_CSV}", err=True)
        ctx.exit(EXIT_DIVERGED)
    click.echo(f"[SUCCESS] Training finished: {run.run_dir}")
