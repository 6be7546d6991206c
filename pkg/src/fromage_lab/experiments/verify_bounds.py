"""
Randomised verification of the perturbation bounds.

Trials are seeded individually (``seed + trial``), so any offending row can be
replayed on its own with :func:`run_trial`. The ``descent`` suite compares the
loss change of a Fromage-direction step with the descent inequality; its
breakdown maximum comes from a finite ``t`` grid, so those rows carry
``grid_approximated`` and a pass there is evidence rather than proof.
"""

from __future__ import annotations

import logging
from typing import Any

import attrs
import numpy as np

from ..bounds import (
    BoundComparison,
    PerturbationSpec,
    descent_inequality_check,
    functional_bound,
    jacobian_bound,
    matrix_conditioning_check,
    toy_scalar_bound,
)
from ..data import Batch, LossKind
from ..exceptions import ZeroGradientError
from ..linalg import SpectralMethod, singular_extremes
from ..net import Mlp, MlpConfig, Nonlinearity, loss_and_gradients
from ..optim import relative_update
from ..schema import VerifyBoundsSection
from .pool import run_jobs

logger = logging.getLogger(__name__)

VERIFY_CSV = "verify_bounds.csv"
VERIFY_COLUMNS = [
    "trial",
    "seed",
    "suite",
    "nonlinearity",
    "depth",
    "layer",
    "alpha",
    "beta",
    "kappa",
    "r_max",
    "measured",
    "bound",
    "satisfied",
    "hypothesis_violated",
    "grid_approximated",
]

NETWORK_SUITES = ("functional", "jacobian", "descent")
KNOWN_SUITES = ("scalar", "conditioning", *NETWORK_SUITES)

# Samples per descent trial, and the t grid used for the breakdown maximum.
DESCENT_BATCH = 16
DESCENT_T_GRID = 16


@attrs.define(kw_only=True, frozen=True)
class Trial:
    trial: int
    seed: int
    suite: str
    depth: int
    nonlinearity: str
    r: float
    width: int


def _row(trial: Trial, comparison: BoundComparison, r_max: float, scale: float) -> dict[str, Any]:
    scaled = comparison.scaled(scale) if scale != 1.0 else comparison
    ctx = scaled.context
    return {
        "trial": trial.trial,
        "seed": trial.seed,
        "suite": trial.suite,
        "nonlinearity": trial.nonlinearity,
        "depth": ctx.depth,
        "layer": ctx.layer,
        "alpha": ctx.alpha,
        "beta": ctx.beta,
        "kappa": ctx.kappa,
        "r_max": r_max,
        "measured": scaled.measured,
        "bound": scaled.bound,
        "satisfied": scaled.satisfied,
        "hypothesis_violated": scaled.hypothesis_violated,
        "grid_approximated": scaled.grid_approximated,
    }


def _scalar_trial(trial: Trial, rng: np.random.Generator) -> BoundComparison:
    a, b = rng.uniform(0.5, 2.0, size=2) * rng.choice([-1.0, 1.0], size=2)
    da = trial.r * a
    db = trial.r * b
    # Even trials move both factors outward, which saturates the bound.
    if trial.trial % 2:
        db = -db
    return toy_scalar_bound(float(a), float(b), float(da), float(db))


def _conditioning_trial(trial: Trial, rng: np.random.Generator, method: SpectralMethod) -> BoundComparison:
    n = trial.width
    m_cols = max(1, n // 2)
    m = rng.standard_normal((n, m_cols))
    mt = m + trial.r * rng.standard_normal((n, m_cols))
    x = rng.standard_normal((m_cols, n))
    y = rng.standard_normal((m_cols, n))
    if trial.trial % 2:
        # Rank one X and Y.
        x = np.outer(rng.standard_normal(m_cols), rng.standard_normal(n))
        y = np.outer(rng.standard_normal(m_cols), rng.standard_normal(n))
    cap = max(singular_extremes(m, method=method).kappa, singular_extremes(mt, method=method).kappa)
    return matrix_conditioning_check(mt, m, x, y, cap, method=method)


def _descent_rows(trial: Trial, net: Mlp, rng: np.random.Generator, scale: float) -> list[dict[str, Any]]:
    # Fromage direction: every layer moves by trial.r of its norm against its gradient.
    inputs = rng.standard_normal((trial.width, DESCENT_BATCH))
    labels = rng.integers(0, net.config.widths[-1], size=DESCENT_BATCH)
    batch = Batch.from_arrays(inputs, labels)
    _, grads = loss_and_gradients(net, batch, LossKind.SOFTMAX_CROSS_ENTROPY)
    deltas = [relative_update(w, g, trial.r) for w, g in zip(net.weights, grads.grads, strict=True)]
    try:
        comparison = descent_inequality_check(
            net, deltas, batch, LossKind.SOFTMAX_CROSS_ENTROPY, DESCENT_T_GRID, refine=False
        )
    except ZeroGradientError as e:
        logger.warning(f"descent trial {trial.trial} seed {trial.seed} skipped: {e}")
        return []
    return [_row(trial, comparison, trial.r, scale)]


def run_trial(trial: Trial, *, method: SpectralMethod = "lapack", bound_scale: float = 1.0) -> list[dict[str, Any]]:
    """Evaluate one seeded trial; network suites yield one row per bound checked."""
    rng = np.random.default_rng(trial.seed)
    if trial.suite == "scalar":
        return [_row(trial, _scalar_trial(trial, rng), trial.r, bound_scale)]
    if trial.suite == "conditioning":
        return [_row(trial, _conditioning_trial(trial, rng, method), trial.r, bound_scale)]

    config = MlpConfig.uniform(
        input_dim=trial.width,
        width=trial.width,
        depth=trial.depth,
        output_dim=trial.width,
        nonlinearity=Nonlinearity.parse(trial.nonlinearity),
        init="scaled_gaussian",
        seed=trial.seed,
    )
    net = Mlp.initialize(config)
    if trial.suite == "descent":
        return _descent_rows(trial, net, rng, bound_scale)
    spec = PerturbationSpec.random(net, trial.r, rng)
    perturbed = spec.apply(net)
    x = rng.standard_normal((trial.width, 1))
    r_max = max(spec.relative_sizes)
    if trial.suite == "functional":
        return [_row(trial, functional_bound(net, perturbed, x, method=method), r_max, bound_scale)]
    return [
        _row(trial, jacobian_bound(net, perturbed, x, l, method=method), r_max, bound_scale)
        for l in range(net.depth)
    ]


def plan_trials(section: VerifyBoundsSection, seed: int) -> list[Trial]:
    """
    Every trial of the configured grid, numbered consecutively.

    Network suites cover depth x nonlinearity x relative size; ``scalar`` and
    ``conditioning`` only vary the relative size.
    """
    unknown = set(section.suites) - set(KNOWN_SUITES)
    if unknown:
        raise ValueError(f"unknown bound suites {sorted(unknown)}")
    trials: list[Trial] = []

    def add(suite: str, depth: int, nonlinearity: str, r: float) -> None:
        for _ in range(section.trials):
            index = len(trials)
            trials.append(
                Trial(trial=index, seed=seed + index, suite=suite, depth=depth,
                      nonlinearity=nonlinearity, r=r, width=section.width)
            )

    for suite in section.suites:
        if suite in NETWORK_SUITES:
            for depth in section.depths:
                for nonlinearity in section.nonlinearities:
                    for r in section.relative_sizes:
                        add(suite, depth, nonlinearity, r)
        else:
            for r in section.relative_sizes:
                add(suite, 1 if suite == "conditioning" else 2, "identity", r)
    return trials


def violations(rows: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Rows that fail although the bound's hypotheses hold."""
    return [r for r in rows if not r["satisfied"] and not r["hypothesis_violated"]]


def verify_bounds(section: VerifyBoundsSection, seed: int) -> list[dict[str, Any]]:
    trials = plan_trials(section, seed)
    logger.info(f"verifying bounds over {len(trials)} trials")
    method = section.spectral_method
    results = run_jobs(
        lambda t: run_trial(t, method=method, bound_scale=section.bound_scale),
        trials,
        workers=section.workers,
    )
    return [row for rows in results for row in rows]
