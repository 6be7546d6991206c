"""
Compounding norm growth in a scale-invariant layer.

Random gradients are projected orthogonal to ``W`` (the situation a
scale-invariant layer is always in) and fed to Fromage or, without the
prefactor, LARS. LARS then grows ``||W||`` by ``sqrt(1 + eta**2)`` per step
while Fromage keeps it fixed.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from ..linalg import Matrix, frobenius_norm, inner_product_frobenius
from ..net import GradientSet, Mlp, MlpConfig, Nonlinearity
from ..optim import OptimizerKind, OptimizerState, fromage_step, lars_step

NORM_GROWTH_CSV = "norm_growth.csv"
NORM_GROWTH_COLUMNS = ["step", "weight_norm", "norm_ratio", "predicted_ratio"]


def project_out(g: Matrix, w: Matrix) -> Matrix:
    """``g - W <g, W> / ||W||**2``."""
    return g - w * (inner_product_frobenius(g, w) / inner_product_frobenius(w, w))


def norm_growth(
    steps: int,
    eta: float,
    with_prefactor: bool,
    seed: int,
    *,
    rows: int = 16,
    cols: int = 16,
) -> list[dict[str, Any]]:
    """
    Per-step weight norm of the synthetic layer, starting with step 0.

    ``predicted_ratio`` is 1 for Fromage and ``(1 + eta**2) ** (t / 2)`` for LARS.
    """
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    if eta < 0.0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    rng = np.random.default_rng(seed)
    config = MlpConfig(widths=(cols, rows), nonlinearity=Nonlinearity.identity(), seed=seed)
    net = Mlp(config=config, weights=[rng.standard_normal((rows, cols))])
    kind = OptimizerKind.FROMAGE if with_prefactor else OptimizerKind.LARS
    state = OptimizerState.create(kind, eta, net) if eta > 0.0 else None
    step_fn = fromage_step if with_prefactor else lars_step

    w0_norm = frobenius_norm(net.weights[0])
    growth = 1.0 if with_prefactor else 1.0 + eta * eta
    out = [{"step": 0, "weight_norm": w0_norm, "norm_ratio": 1.0, "predicted_ratio": 1.0}]
    for t in range(1, steps + 1):
        g = project_out(rng.standard_normal((rows, cols)), net.weights[0])
        if state is not None:
            net = step_fn(net, GradientSet(grads=[g]), state)
        norm = frobenius_norm(net.weights[0])
        out.append(
            {
                "step": t,
                "weight_norm": norm,
                "norm_ratio": norm / w0_norm,
                "predicted_ratio": math.pow(growth, t / 2),
            }
        )
    return out
