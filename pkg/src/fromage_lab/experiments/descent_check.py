"""
Empirical check of the descent threshold.

Starting from a trained checkpoint, single Fromage steps with
``eta = fraction * descent_threshold(L, cos_theta)`` are taken along seeded
minibatch gradients; a trial counts as a success when the full-batch loss
decreases.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

from ..bounds import descent_threshold
from ..data import Dataset, LossKind
from ..net import Mlp, evaluate, loss_and_gradients
from ..optim import OptimizerKind, OptimizerState, fromage_step
from ..schema import DescentCheckSection
from .pool import derive_seed

logger = logging.getLogger(__name__)

DESCENT_CSV = "descent_check.csv"
DESCENT_COLUMNS = ["trial", "seed", "eta", "loss_before", "loss_after", "decreased"]


def descent_check(
    net: Mlp,
    dataset: Dataset,
    section: DescentCheckSection,
    loss_kind: LossKind | str,
    seed: int,
) -> tuple[list[dict[str, Any]], float]:
    """
    Run the trials and return ``(rows, fraction of trials that decreased the loss)``.

    Raises
    ------
    ValueError
        If the threshold is not positive, i.e. no step size is guaranteed to descend.
    """
    threshold = descent_threshold(net.depth, section.cos_theta)
    eta = section.fraction * threshold
    if not eta > 0.0:
        raise ValueError(f"descent threshold {threshold!r} gives no positive step size")
    state = OptimizerState.create(OptimizerKind.FROMAGE, eta, net)
    full = dataset.full_batch()
    loss_before, _ = evaluate(net, full, loss_kind)
    batch_size = min(section.batch_size, dataset.size)
    logger.info(f"depth {net.depth}: threshold {threshold:.6g}, eta {eta:.6g}")

    rows = []
    for trial in range(section.trials):
        trial_seed = derive_seed(seed, trial)
        rng = np.random.default_rng(trial_seed)
        batch = dataset.take(np.sort(rng.choice(dataset.size, size=batch_size, replace=False)))
        _, grads = loss_and_gradients(net, batch, loss_kind)
        stepped = fromage_step(net, grads, state)
        loss_after, _ = evaluate(stepped, full, loss_kind)
        rows.append(
            {
                "trial": trial,
                "seed": trial_seed,
                "eta": eta,
                "loss_before": loss_before,
                "loss_after": loss_after,
                "decreased": loss_after < loss_before,
            }
        )
    fraction = sum(1 for r in rows if r["decreased"]) / len(rows) if rows else 0.0
    return rows, fraction
