"""
Learning-rate sensitivity: train every ``(optimiser, eta)`` cell for a fixed
budget and score it by ``best_error / error`` within its optimiser.
"""

from __future__ import annotations

import logging
from typing import Any

import attrs

from ..data import Dataset
from ..schema import LrMetric, RunConfig
from .pool import run_jobs
from .train import build_network, train

logger = logging.getLogger(__name__)

LR_GRID_CSV = "lr_grid.csv"
LR_GRID_COLUMNS = [
    "optimizer",
    "eta",
    "final_train_loss",
    "final_train_accuracy",
    "error",
    "score",
    "status",
]
SCORE_ERROR_FLOOR = 1e-12


def _cell(config: RunConfig, dataset: Dataset, optimizer: str, eta: float) -> dict[str, Any]:
    section = config.lr_grid
    run_config = attrs.evolve(
        config,
        optimizer=attrs.evolve(config.optimizer, kind=optimizer, eta=eta),
        training=attrs.evolve(config.training, epochs=section.epochs),
    )
    result = train(run_config, dataset, net=build_network(run_config, dataset))
    error = None
    if not result.diverged:
        if section.metric is LrMetric.FINAL_TRAIN_LOSS:
            error = result.final_loss
        else:
            error = 1.0 - result.final_accuracy
    logger.info(f"{optimizer} eta={eta:g}: {result.status}")
    return {
        "optimizer": optimizer,
        "eta": eta,
        "final_train_loss": None if result.diverged else result.final_loss,
        "final_train_accuracy": None if result.diverged else result.final_accuracy,
        "error": error,
        "score": None,
        "status": result.status,
    }


def normalise_scores(rows: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """
    Fill ``score = best_error / error`` per optimiser.

    Errors are floored at ``SCORE_ERROR_FLOOR`` on both sides, so scores lie
    in ``(0, 1]`` even when the best error is zero. Diverged cells and
    optimisers whose cells all diverged get no score.
    """
    best: dict[str, float] = {}
    for row in rows:
        if row["error"] is not None:
            best[row["optimizer"]] = min(best.get(row["optimizer"], row["error"]), row["error"])
    scored = []
    for row in rows:
        row = dict(row)
        if row["error"] is not None:
            lowest = max(best[row["optimizer"]], SCORE_ERROR_FLOOR)
            row["score"] = lowest / max(row["error"], SCORE_ERROR_FLOOR)
        scored.append(row)
    return scored


def lr_grid(config: RunConfig, dataset: Dataset) -> list[dict[str, Any]]:
    section = config.lr_grid
    if not section.etas:
        raise ValueError("lr_grid.etas must not be empty")
    cells = [(optimizer, eta) for optimizer in section.optimizers for eta in section.etas]
    rows = run_jobs(lambda c: _cell(config, dataset, *c), cells, workers=section.workers)
    return normalise_scores(rows)
