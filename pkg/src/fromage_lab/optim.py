"""
Layerwise optimisers and learning-rate schedules.

Each weight matrix is one parameter group. Steps are pure: they take a network,
its gradients and an optimiser state and return new values; nothing is updated
in place.

Fromage scales every layer's step to a relative size ``eta`` and divides by
``sqrt(1 + eta**2)``; LARS takes the same relative step without the prefactor,
which makes weight norms grow as ``(1 + eta**2) ** (T / 2)`` when gradients are
orthogonal to the weights.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from enum import StrEnum

import attrs
import numpy as np

from .exceptions import NonFiniteError, ShapeMismatchError
from .linalg import Matrix, frobenius_norm
from .net import GradientSet, Mlp

logger = logging.getLogger(__name__)

EPSILON_FLOOR = 1e-12
CLAMP_RTOL = 1e-12


class OptimizerKind(StrEnum):
    FROMAGE = "fromage"
    LARS = "lars"
    SGD = "sgd"
    ADAM = "adam"


def _positive_eta(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not value > 0.0:
        raise ValueError(f"eta must be positive, got {value}")


@attrs.define(kw_only=True, frozen=True, eq=False)
class OptimizerState:
    """
    Algorithm, learning rate, hyperparameters and per-layer buffers.

    Attributes
    ----------
    kind : OptimizerKind
        Which update rule :func:`optimizer_step` dispatches to.
    eta : float
        Learning rate; for Fromage/LARS the relative step size per layer.
    momentum : float
        Heavy-ball coefficient for SGD.
    beta1, beta2, adam_epsilon : float
        Adam moment decay rates and denominator guard.
    weight_decay : float
        Decoupled decay for LARS, coupled L2 for SGD; 0 disables it.
    epsilon_floor : float
        Guard on ``||g_l||_F`` and ``||W_l||_F`` in layerwise ratios.
    buffers : tuple of numpy.ndarray
        SGD momentum or Adam first moment; empty for Fromage/LARS.
    second_moments : tuple of numpy.ndarray
        Adam second moment; empty otherwise.
    step_count : int
        Completed steps.
    initial_norms : tuple of float or None
        Per-layer caps for :func:`apply_norm_clamp`; ``None`` disables the clamp.
    """

    kind: OptimizerKind = attrs.field(converter=OptimizerKind)
    eta: float = attrs.field(converter=float, validator=_positive_eta)
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    weight_decay: float = 0.0
    epsilon_floor: float = EPSILON_FLOOR
    buffers: tuple[Matrix, ...] = attrs.field(default=(), converter=tuple)
    second_moments: tuple[Matrix, ...] = attrs.field(default=(), converter=tuple)
    step_count: int = 0
    initial_norms: tuple[float, ...] | None = None

    @classmethod
    def create(
        cls,
        kind: OptimizerKind | str,
        eta: float,
        net: Mlp,
        *,
        clamp: bool = False,
        **hyperparams: float,
    ) -> "OptimizerState":
        """Fresh state with zeroed buffers shaped like ``net``."""
        kind = OptimizerKind(kind)
        zeros = tuple(np.zeros_like(w) for w in net.weights)
        buffers: tuple[Matrix, ...] = ()
        second: tuple[Matrix, ...] = ()
        if kind is OptimizerKind.SGD:
            buffers = zeros
        elif kind is OptimizerKind.ADAM:
            buffers = zeros
            second = tuple(np.zeros_like(w) for w in net.weights)
        return cls(
            kind=kind,
            eta=eta,
            buffers=buffers,
            second_moments=second,
            initial_norms=record_initial_norms(net) if clamp else None,
            **hyperparams,
        )

    def with_eta(self, eta: float) -> "OptimizerState":
        return attrs.evolve(self, eta=eta)


def _validate(net: Mlp, grads: GradientSet, state: OptimizerState, kind: OptimizerKind) -> None:
    if state.kind is not kind:
        raise ValueError(f"state is for {state.kind}, not {kind}")
    if len(grads) != net.depth:
        raise ShapeMismatchError("one gradient per layer required", (len(grads),), (net.depth,))
    for w, g in zip(net.weights, grads.grads, strict=True):
        if w.shape != g.shape:
            raise ShapeMismatchError("gradient shape differs from weight", g.shape, w.shape)
    if not grads.is_finite():
        raise NonFiniteError("gradients contain NaN or Inf; refusing to step")


def relative_update(w: Matrix, g: Matrix, eta: float, epsilon_floor: float = EPSILON_FLOOR) -> Matrix:
    """
    ``-eta * (||W||_F / ||g||_F) * g``, the layerwise step before any prefactor.

    Its Frobenius norm is ``eta * ||W||_F``.
    """
    w_norm = frobenius_norm(w)
    if w_norm < epsilon_floor:
        logger.warning(f"weight norm {w_norm:.3g} hit the floor {epsilon_floor:.0e}")
        w_norm = epsilon_floor
    g_norm = max(frobenius_norm(g), epsilon_floor)
    return (-eta * w_norm / g_norm) * g


def fromage_step(net: Mlp, grads: GradientSet, state: OptimizerState) -> Mlp:
    """
    One Fromage step:
    ``W_l <- (W_l - eta * ||W_l|| / ||g_l|| * g_l) / sqrt(1 + eta**2)``.

    Layers whose gradient norm is below ``epsilon_floor`` are returned
    unchanged, prefactor included.
    """
    _validate(net, grads, state, OptimizerKind.FROMAGE)
    prefactor = 1.0 / math.sqrt(1.0 + state.eta**2)
    new = []
    for w, g, g_norm in zip(net.weights, grads.grads, grads.norms, strict=True):
        if g_norm < state.epsilon_floor:
            new.append(w)
            continue
        new.append(prefactor * (w + relative_update(w, g, state.eta, state.epsilon_floor)))
    return net.with_weights(new)


def lars_step(net: Mlp, grads: GradientSet, state: OptimizerState) -> Mlp:
    """
    One LARS step: ``W_l <- W_l - eta * ||W_l|| / ||g_l|| * g_l``.

    With ``weight_decay > 0`` the weights are first shrunk by
    ``1 - eta * weight_decay``.
    """
    _validate(net, grads, state, OptimizerKind.LARS)
    new = []
    for w, g, g_norm in zip(net.weights, grads.grads, grads.norms, strict=True):
        if state.weight_decay > 0.0:
            w = (1.0 - state.eta * state.weight_decay) * w
        if g_norm < state.epsilon_floor:
            new.append(w)
            continue
        new.append(w + relative_update(w, g, state.eta, state.epsilon_floor))
    return net.with_weights(new)


def sgd_step(net: Mlp, grads: GradientSet, state: OptimizerState) -> tuple[Mlp, OptimizerState]:
    """Heavy-ball SGD: ``v <- mu * v + g``; ``W <- W - eta * v``."""
    _validate(net, grads, state, OptimizerKind.SGD)
    new_weights = []
    new_buffers = []
    for w, g, v in zip(net.weights, grads.grads, state.buffers, strict=True):
        if state.weight_decay > 0.0:
            g = g + state.weight_decay * w
        v = state.momentum * v + g
        new_buffers.append(v)
        new_weights.append(w - state.eta * v)
    new_state = attrs.evolve(state, buffers=new_buffers, step_count=state.step_count + 1)
    return net.with_weights(new_weights), new_state


def adam_step(net: Mlp, grads: GradientSet, state: OptimizerState) -> tuple[Mlp, OptimizerState]:
    """Adam with bias correction."""
    _validate(net, grads, state, OptimizerKind.ADAM)
    t = state.step_count + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_weights = []
    first = []
    second = []
    for w, g, m, v in zip(net.weights, grads.grads, state.buffers, state.second_moments, strict=True):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        new_weights.append(w - state.eta * m_hat / (np.sqrt(v_hat) + state.adam_epsilon))
        first.append(m)
        second.append(v)
    new_state = attrs.evolve(state, buffers=first, second_moments=second, step_count=t)
    return net.with_weights(new_weights), new_state


def optimizer_step(net: Mlp, grads: GradientSet, state: OptimizerState) -> tuple[Mlp, OptimizerState]:
    """
    Dispatch on ``state.kind`` and apply the norm clamp when it is enabled.
    """
    if state.kind is OptimizerKind.FROMAGE:
        new_net, new_state = fromage_step(net, grads, state), attrs.evolve(state, step_count=state.step_count + 1)
    elif state.kind is OptimizerKind.LARS:
        new_net, new_state = lars_step(net, grads, state), attrs.evolve(state, step_count=state.step_count + 1)
    elif state.kind is OptimizerKind.SGD:
        new_net, new_state = sgd_step(net, grads, state)
    else:
        new_net, new_state = adam_step(net, grads, state)
    if state.initial_norms is not None:
        new_net = apply_norm_clamp(new_net, state.initial_norms)
    return new_net, new_state


def record_initial_norms(net: Mlp) -> tuple[float, ...]:
    return tuple(net.weight_norms())


def apply_norm_clamp(net: Mlp, initial_norms: Sequence[float]) -> Mlp:
    """
    Rescale every layer whose norm exceeds its cap back onto the cap.

    A relative slack of ``1e-12`` keeps the projection idempotent under
    round-off.
    """
    if len(initial_norms) != net.depth:
        raise ShapeMismatchError("one cap per layer required", (len(initial_norms),), (net.depth,))
    new = []
    changed = False
    for w, cap in zip(net.weights, initial_norms, strict=True):
        norm = frobenius_norm(w)
        if norm > cap * (1.0 + CLAMP_RTOL):
            new.append(w * (cap / norm))
            changed = True
        else:
            new.append(w)
    return net.with_weights(new) if changed else net


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


class ScheduleKind(StrEnum):
    CONSTANT = "constant"
    EXPONENTIAL = "exponential"
    DECAY_ON_PLATEAU = "decay_on_plateau"
    STEP = "step"


def _unit_interval(instance: object, attribute: attrs.Attribute[float], value: float) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{attribute.name} must lie in (0, 1), got {value}")


@attrs.define(kw_only=True, frozen=True)
class Schedule:
    """
    Learning-rate schedule.

    ``exponential`` multiplies by ``gamma`` every epoch; ``decay_on_plateau``
    multiplies by ``factor`` whenever the best loss has not improved by at
    least ``threshold`` (relative) for ``patience`` epochs; ``step`` multiplies
    by ``factor`` at each epoch listed in ``milestones``.
    """

    kind: ScheduleKind = attrs.field(default=ScheduleKind.CONSTANT, converter=ScheduleKind)
    gamma: float = attrs.field(default=0.9, validator=_unit_interval)
    factor: float = attrs.field(default=0.1, validator=_unit_interval)
    patience: int = 5
    threshold: float = 1e-3
    milestones: tuple[int, ...] = attrs.field(default=(), converter=tuple)


def plateau_decays(history: Sequence[float], patience: int, threshold: float) -> int:
    """Number of plateau decays triggered by replaying ``history``."""
    best = math.inf
    wait = 0
    decays = 0
    for loss in history:
        if loss < best * (1.0 - threshold) or best == math.inf:
            best = min(best, loss)
            wait = 0
            continue
        wait += 1
        if wait >= patience:
            decays += 1
            wait = 0
    return decays


def schedule_eta(schedule: Schedule, history: Sequence[float], epoch: int, eta: float) -> float:
    """
    Learning rate after ``epoch`` completed epochs.

    Parameters
    ----------
    schedule : Schedule
        The schedule to apply.
    history : sequence of float
        Per-epoch training losses so far; only the plateau rule reads it.
    epoch : int
        Number of completed epochs.
    eta : float
        Initial learning rate.
    """
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    if schedule.kind is ScheduleKind.CONSTANT:
        return eta
    if schedule.kind is ScheduleKind.EXPONENTIAL:
        return eta * schedule.gamma**epoch
    if schedule.kind is ScheduleKind.STEP:
        passed = sum(1 for m in schedule.milestones if m <= epoch)
        return eta * schedule.factor**passed
    return eta * schedule.factor ** plateau_decays(history, schedule.patience, schedule.threshold)
