"""
Final training accuracy across depth, optimiser and learning rate.

Every ``(depth, optimiser, eta)`` cell is an independent training run with
exponential learning-rate decay. Networks of the same depth share their
initialisation across optimisers and learning rates.
"""

from __future__ import annotations

import logging
from typing import Any

import attrs

from ..data import Dataset
from ..optim import ScheduleKind
from ..records import RunStatus
from ..schema import DepthSweepSection, RunConfig
from .pool import derive_seed, run_jobs
from .train import build_network, train

logger = logging.getLogger(__name__)

DEPTH_SWEEP_CSV = "depth_sweep.csv"
BEST_CSV = "best_over_eta.csv"
DEPTH_SWEEP_COLUMNS = ["depth", "optimizer", "eta", "final_train_loss", "final_train_accuracy", "status"]
BEST_COLUMNS = ["depth", "optimizer", "best_eta", "best_accuracy", "status"]

FULL_FIDELITY_WIDTH = 784
FULL_FIDELITY_EPOCHS = 100


@attrs.define(kw_only=True, frozen=True)
class SweepCell:
    depth: int
    optimizer: str
    eta: float


def effective_section(section: DepthSweepSection) -> DepthSweepSection:
    """Apply the full-fidelity protocol when it is switched on."""
    if not section.full_fidelity:
        return section
    return attrs.evolve(
        section,
        width=FULL_FIDELITY_WIDTH,
        epochs=FULL_FIDELITY_EPOCHS,
        subset=None,
        gamma=0.95,
        depths=list(section.full_fidelity_depths),
    )


def sweep_cells(section: DepthSweepSection) -> list[SweepCell]:
    """Cells in grid order: depth-major, then optimiser, then eta."""
    return [
        SweepCell(depth=depth, optimizer=optimizer, eta=eta)
        for depth in section.depths
        for optimizer, etas in section.grid.items()
        for eta in etas
    ]


def cell_config(config: RunConfig, section: DepthSweepSection, cell: SweepCell) -> RunConfig:
    return attrs.evolve(
        config,
        model=attrs.evolve(config.model, depth=cell.depth, width=section.width),
        optimizer=attrs.evolve(config.optimizer, kind=cell.optimizer, eta=cell.eta),
        schedule=attrs.evolve(config.schedule, kind=ScheduleKind.EXPONENTIAL, gamma=section.gamma),
        training=attrs.evolve(config.training, epochs=section.epochs),
    )


def run_cell(config: RunConfig, section: DepthSweepSection, dataset: Dataset, cell: SweepCell) -> dict[str, Any]:
    run_config = cell_config(config, section, cell)
    net = build_network(run_config, dataset, seed=derive_seed(config.seed, cell.depth))
    result = train(run_config, dataset, net=net)
    logger.info(
        f"depth {cell.depth} {cell.optimizer} eta={cell.eta:g}: "
        f"{result.status} accuracy {result.final_accuracy:.4f}"
    )
    return {
        "depth": cell.depth,
        "optimizer": cell.optimizer,
        "eta": cell.eta,
        "final_train_loss": None if result.diverged else result.final_loss,
        "final_train_accuracy": None if result.diverged else result.final_accuracy,
        "status": result.status,
    }


def best_over_eta(rows: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """
    Best final accuracy per ``(depth, optimiser)`` over its learning rates.

    Diverged cells are ignored; a group with no surviving cell is reported as
    diverged with empty values. Ties keep the first eta in grid order.
    """
    groups: dict[tuple[int, str], list[dict[str, Any]]] = {}
    for row in rows:
        groups.setdefault((row["depth"], row["optimizer"]), []).append(row)
    best = []
    for (depth, optimizer), members in groups.items():
        alive = [r for r in members if r["status"] != RunStatus.DIVERGED]
        if not alive:
            best.append(
                {"depth": depth, "optimizer": optimizer, "best_eta": None, "best_accuracy": None,
                 "status": RunStatus.DIVERGED}
            )
            continue
        top = max(alive, key=lambda r: r["final_train_accuracy"])
        best.append(
            {
                "depth": depth,
                "optimizer": optimizer,
                "best_eta": top["eta"],
                "best_accuracy": top["final_train_accuracy"],
                "status": RunStatus.COMPLETED,
            }
        )
    return best


def depth_sweep(config: RunConfig, dataset: Dataset) -> tuple[list[dict[str, Any]], list[dict[str, Any]]]:
    """Run every cell and return ``(cell rows, best-over-eta rows)``."""
    section = effective_section(config.depth_sweep)
    if any(d < 1 for d in section.depths):
        raise ValueError(f"depths must be positive, got {section.depths}")
    if section.subset is not None:
        dataset = dataset.subset(section.subset, config.seed)
    cells = sweep_cells(section)
    rows = run_jobs(lambda cell: run_cell(config, section, dataset, cell), cells, workers=section.workers)
    return rows, best_over_eta(rows)
