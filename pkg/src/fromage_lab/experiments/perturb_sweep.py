"""
Gradient breakdown along the relative-update direction.

For every checkpoint and every ``eta`` each layer is moved to
``W_l - eta * ||W_l|| / ||g_l|| * g_l`` using full-batch gradients, and the
relative change of one layer's gradient is recorded next to the
deep-relative-trust model value for the applied relative sizes.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from ..bounds import drt_model, gradient_breakdown_measured
from ..checkpoint import CHECKPOINT_SUFFIX, load_checkpoint
from ..data import Dataset, LossKind
from ..exceptions import CheckpointError, ZeroGradientError
from ..linalg import frobenius_norm
from ..net import Mlp, evaluate, loss_and_gradients, perturb
from ..optim import relative_update

logger = logging.getLogger(__name__)

PERTURB_CSV = "perturb_sweep.csv"
PERTURB_COLUMNS = [
    "checkpoint",
    "depth",
    "use_final_nonlinearity",
    "layer",
    "eta",
    "baseline_loss",
    "perturbed_loss",
    "gradient_breakdown",
    "drt_model",
]


def resolve_checkpoints(entries: Sequence[str | Path]) -> list[Path]:
    """Expand directories to their sorted ``.frmg`` files; plain files pass through."""
    paths: list[Path] = []
    for entry in entries:
        path = Path(entry).expanduser()
        if path.is_dir():
            found = sorted(path.glob(f"*{CHECKPOINT_SUFFIX}"))
            if not found:
                raise CheckpointError(f"no checkpoints in {path}")
            paths.extend(found)
        elif path.exists():
            paths.append(path)
        else:
            raise CheckpointError(f"checkpoint not found: {path}")
    return paths


def relative_update_deltas(net: Mlp, grads: Sequence[np.ndarray], eta: float) -> list[np.ndarray]:
    """Per-layer ``-eta * ||W|| / ||g|| * g``; layers with zero gradient stay put."""
    deltas = []
    for w, g in zip(net.weights, grads, strict=True):
        if frobenius_norm(g) == 0.0:
            deltas.append(np.zeros_like(w))
        else:
            deltas.append(relative_update(w, g, eta))
    return deltas


def sweep_network(
    net: Mlp,
    dataset: Dataset,
    etas: Sequence[float],
    loss_kind: LossKind | str,
    *,
    layer: int = 0,
    name: str = "",
) -> list[dict[str, Any]]:
    """
    Rows of the sweep for one network.

    Raises
    ------
    ZeroGradientError
        If the recorded layer has a zero gradient.
    """
    if not 0 <= layer < net.depth:
        raise IndexError(f"layer {layer} outside [0, {net.depth - 1}]")
    batch = dataset.full_batch()
    baseline, grads = loss_and_gradients(net, batch, loss_kind)
    if grads.norms[layer] == 0.0:
        raise ZeroGradientError(layer)
    rows = []
    for eta in etas:
        deltas = relative_update_deltas(net, grads.grads, eta)
        moved = perturb(net, deltas)
        perturbed_loss, _ = evaluate(moved, batch, loss_kind)
        breakdown = gradient_breakdown_measured(net, deltas, batch, loss_kind, layer)
        sizes = [frobenius_norm(d) / frobenius_norm(w) for w, d in zip(net.weights, deltas, strict=True)]
        rows.append(
            {
                "checkpoint": name,
                "depth": net.depth,
                "use_final_nonlinearity": net.config.use_final_nonlinearity,
                "layer": layer,
                "eta": float(eta),
                "baseline_loss": baseline,
                "perturbed_loss": perturbed_loss,
                "gradient_breakdown": breakdown,
                "drt_model": drt_model(sizes),
            }
        )
    return rows


def perturb_sweep(
    checkpoints: Sequence[str | Path],
    dataset: Dataset,
    etas: Sequence[float],
    loss_kind: LossKind | str,
    *,
    layer: int = 0,
) -> list[dict[str, Any]]:
    rows: list[dict[str, Any]] = []
    for path in resolve_checkpoints(checkpoints):
        net = load_checkpoint(path)
        logger.info(f"sweeping {path.name} (depth {net.depth}) over {len(etas)} learning rates")
        rows.extend(sweep_network(net, dataset, etas, loss_kind, layer=layer, name=path.name))
    return rows
