"""
Bias-free multilayer perceptrons.

A network of depth ``L`` maps ``h_0 = x`` through ``h_l = phi(W_l h_{l-1})``.
Inputs are matrices whose columns are examples. Layer indices in this module
are zero-based: ``weights[0]`` is the input layer ``W_1`` and ``weights[-1]``
the output layer ``W_L``.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Sequence
from enum import StrEnum
from typing import Any

import attrs
import numpy as np

from .data import Batch, LossKind, loss_with_gradient
from .exceptions import ShapeMismatchError
from .linalg import Matrix, as_matrix, frobenius_norm

logger = logging.getLogger(__name__)

FD_STEP_SCALE = 1e-6


class NonlinearityKind(StrEnum):
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    IDENTITY = "identity"


@attrs.define(kw_only=True, frozen=True)
class Nonlinearity:
    """
    Elementwise nonlinearity with its transmission constants.

    Attributes
    ----------
    kind : NonlinearityKind
        Which map to apply.
    slope : float
        Negative-side slope; 0 for relu, ``a`` for leaky relu, 1 for identity.

    Notes
    -----
    ``alpha``/``beta`` bound how much the map scales norms and differences.
    relu transmits nothing on the negative side, so its constants are the
    modelling values ``1/2`` and :attr:`violates_transmission` is set.
    The derivative at zero is fixed: ``relu'(0) = 0`` and ``leaky_relu'(0) = a``.
    """

    kind: NonlinearityKind = attrs.field(converter=NonlinearityKind)
    slope: float = attrs.field(converter=float)

    @slope.validator
    def _check_slope(self, attribute: attrs.Attribute[float], value: float) -> None:
        if self.kind is NonlinearityKind.LEAKY_RELU and not 0.0 < value <= 1.0:
            raise ValueError(f"leaky_relu slope must lie in (0, 1], got {value}")

    @classmethod
    def relu(cls) -> "Nonlinearity":
        return cls(kind=NonlinearityKind.RELU, slope=0.0)

    @classmethod
    def leaky_relu(cls, a: float) -> "Nonlinearity":
        return cls(kind=NonlinearityKind.LEAKY_RELU, slope=a)

    @classmethod
    def identity(cls) -> "Nonlinearity":
        return cls(kind=NonlinearityKind.IDENTITY, slope=1.0)

    @classmethod
    def parse(cls, text: str) -> "Nonlinearity":
        """Parse ``"relu"``, ``"identity"`` or ``"leaky_relu(0.5)"``."""
        spec = text.strip().lower()
        if spec == NonlinearityKind.RELU:
            return cls.relu()
        if spec == NonlinearityKind.IDENTITY:
            return cls.identity()
        match = re.fullmatch(r"leaky_relu\(\s*([0-9.eE+-]+)\s*\)", spec)
        if match:
            return cls.leaky_relu(float(match.group(1)))
        raise ValueError(
            f"unknown nonlinearity '{text}'; use relu, identity or leaky_relu(a)"
        )

    def __str__(self) -> str:
        if self.kind is NonlinearityKind.LEAKY_RELU:
            return f"leaky_relu({self.slope!r})"
        return str(self.kind)

    @property
    def alpha(self) -> float:
        if self.kind is NonlinearityKind.RELU:
            return 0.5
        return self.slope

    @property
    def beta(self) -> float:
        if self.kind is NonlinearityKind.RELU:
            return 0.5
        return 1.0

    @property
    def violates_transmission(self) -> bool:
        return self.kind is NonlinearityKind.RELU

    def apply(self, z: Matrix) -> Matrix:
        if self.kind is NonlinearityKind.IDENTITY:
            return z.copy()
        return np.where(z > 0.0, z, self.slope * z)

    def derivative(self, z: Matrix) -> Matrix:
        if self.kind is NonlinearityKind.IDENTITY:
            return np.ones_like(z)
        return np.where(z > 0.0, 1.0, self.slope)


class InitKind(StrEnum):
    GLOROT_UNIFORM = "glorot_uniform"
    ORTHOGONAL = "orthogonal"
    SCALED_GAUSSIAN = "scaled_gaussian"


def _as_widths(x: Any) -> tuple[int, ...]:
    return tuple(int(w) for w in x)


@attrs.define(kw_only=True, frozen=True)
class MlpConfig:
    """
    Architecture and initialisation of a perceptron.

    Attributes
    ----------
    widths : tuple of int
        ``n_0 .. n_L``; the depth is ``len(widths) - 1``.
    nonlinearity : Nonlinearity
        Applied after every hidden layer.
    use_final_nonlinearity : bool
        Whether the output layer is also followed by the nonlinearity.
    init : InitKind
        ``glorot_uniform``, ``orthogonal`` (scaled by ``init_scale``) or
        ``scaled_gaussian`` with entries ``N(0, init_scale**2 / fan_in)``.
    init_scale : float
        Gain for orthogonal init, sigma for scaled Gaussian init.
    seed : int
        Initialisation seed.
    """

    widths: tuple[int, ...] = attrs.field(converter=_as_widths)
    nonlinearity: Nonlinearity = attrs.field(factory=Nonlinearity.relu)
    use_final_nonlinearity: bool = False
    init: InitKind = attrs.field(default=InitKind.GLOROT_UNIFORM, converter=InitKind)
    init_scale: float = 1.0
    seed: int = 0

    @widths.validator
    def _check_widths(self, attribute: attrs.Attribute[tuple[int, ...]], value: tuple[int, ...]) -> None:
        if len(value) < 2:
            raise ValueError("widths needs at least n_0 and n_1")
        if min(value) < 1:
            raise ValueError(f"all widths must be positive, got {value}")

    @classmethod
    def uniform(
        cls,
        *,
        input_dim: int,
        width: int,
        depth: int,
        output_dim: int,
        **kwargs: Any,
    ) -> "MlpConfig":
        """Config with ``depth - 1`` hidden layers of the same width."""
        if depth < 1:
            raise ValueError("depth must be positive")
        return cls(widths=(input_dim, *([width] * (depth - 1)), output_dim), **kwargs)

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        return [(self.widths[i + 1], self.widths[i]) for i in range(self.depth)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "widths": list(self.widths),
            "nonlinearity": str(self.nonlinearity),
            "use_final_nonlinearity": self.use_final_nonlinearity,
            "init": str(self.init),
            "init_scale": self.init_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MlpConfig":
        return cls(
            widths=data["widths"],
            nonlinearity=Nonlinearity.parse(data["nonlinearity"]),
            use_final_nonlinearity=bool(data["use_final_nonlinearity"]),
            init=data["init"],
            init_scale=float(data["init_scale"]),
            seed=int(data["seed"]),
        )


def _init_layer(
    rng: np.random.Generator, shape: tuple[int, int], init: InitKind, scale: float
) -> Matrix:
    fan_out, fan_in = shape
    if init is InitKind.GLOROT_UNIFORM:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)
    if init is InitKind.ORTHOGONAL:
        tall = (max(shape), min(shape))
        q, r = np.linalg.qr(rng.standard_normal(tall))
        q = q * np.sign(np.diag(r))
        q = q if fan_out >= fan_in else q.T
        return scale * np.ascontiguousarray(q)
    return rng.standard_normal(shape) * (scale / np.sqrt(fan_in))


def _as_weight_tuple(x: Sequence[Any]) -> tuple[Matrix, ...]:
    return tuple(as_matrix(w, name="weight") for w in x)


@attrs.define(kw_only=True, frozen=True, eq=False)
class Mlp:
    """
    Perceptron parameters. Weight arrays are never modified in place; every
    update builds a new :class:`Mlp`.
    """

    config: MlpConfig
    weights: tuple[Matrix, ...] = attrs.field(converter=_as_weight_tuple)

    def __attrs_post_init__(self) -> None:
        expected = self.config.layer_shapes()
        actual = [w.shape for w in self.weights]
        if actual != expected:
            raise ShapeMismatchError("weights do not match the config widths", *actual, *expected)

    @classmethod
    def initialize(cls, config: MlpConfig) -> "Mlp":
        rng = np.random.default_rng(config.seed)
        weights = []
        for i, shape in enumerate(config.layer_shapes()):
            w = _init_layer(rng, shape, config.init, config.init_scale)
            if frobenius_norm(w) == 0.0:
                raise ValueError(f"initialisation produced a zero weight matrix at layer {i}")
            weights.append(w)
        logger.debug(f"Initialised {config.depth}-layer MLP with widths {config.widths}")
        return cls(config=config, weights=weights)

    @property
    def depth(self) -> int:
        return self.config.depth

    @property
    def nonlinearity(self) -> Nonlinearity:
        return self.config.nonlinearity

    def with_weights(self, weights: Sequence[Matrix]) -> "Mlp":
        return Mlp(config=self.config, weights=weights)

    def weight_norms(self) -> list[float]:
        return [frobenius_norm(w) for w in self.weights]

    def layer_is_nonlinear(self, layer: int) -> bool:
        return layer < self.depth - 1 or self.config.use_final_nonlinearity


@attrs.define(kw_only=True, frozen=True, eq=False)
class ForwardTrace:
    """
    Cached states of one forward pass.

    ``hidden[0]`` is the input and ``hidden[k]`` is ``h_k``;
    ``pre_activations[k - 1]`` is ``z_k = W_k h_{k-1}``.
    """

    hidden: tuple[Matrix, ...]
    pre_activations: tuple[Matrix, ...]

    @property
    def input(self) -> Matrix:
        return self.hidden[0]

    @property
    def output(self) -> Matrix:
        return self.hidden[-1]


@attrs.define(kw_only=True, frozen=True, eq=False)
class GradientSet:
    """Per-layer gradients ``g_l`` and their cached Frobenius norms."""

    grads: tuple[Matrix, ...] = attrs.field(converter=tuple)
    norms: tuple[float, ...] = attrs.field(init=False)

    def __attrs_post_init__(self) -> None:
        object.__setattr__(self, "norms", tuple(frobenius_norm(g) for g in self.grads))

    def __len__(self) -> int:
        return len(self.grads)

    def __getitem__(self, layer: int) -> Matrix:
        return self.grads[layer]

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(g))) for g in self.grads)


def forward(net: Mlp, x: Matrix) -> ForwardTrace:
    """
    Run the network on the columns of ``x``.

    Raises
    ------
    ShapeMismatchError
        If ``x`` does not have ``n_0`` rows.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != net.config.widths[0]:
        raise ShapeMismatchError("input rows must equal n_0", x.shape, (net.config.widths[0], 1))
    phi = net.nonlinearity
    hidden = [x]
    pre = []
    h = x
    for i, w in enumerate(net.weights):
        z = w @ h
        h = phi.apply(z) if net.layer_is_nonlinear(i) else z
        pre.append(z)
        hidden.append(h)
    return ForwardTrace(hidden=tuple(hidden), pre_activations=tuple(pre))


def forward_from(net: Mlp, h: Matrix, l: int) -> Matrix:
    """Network output as a function of hidden state ``h_l`` (``0 <= l <= L``)."""
    if not 0 <= l <= net.depth:
        raise IndexError(f"hidden state index {l} outside [0, {net.depth}]")
    phi = net.nonlinearity
    for i in range(l, net.depth):
        z = net.weights[i] @ h
        h = phi.apply(z) if net.layer_is_nonlinear(i) else z
    return h


def _layer_derivatives(net: Mlp, trace: ForwardTrace, i: int) -> Matrix:
    z = trace.pre_activations[i]
    if net.layer_is_nonlinear(i):
        return net.nonlinearity.derivative(z)
    return np.ones_like(z)


def loss_and_gradients(
    net: Mlp, batch: Batch, loss_kind: LossKind | str
) -> tuple[float, GradientSet]:
    """
    Batch-averaged loss and its exact gradient with respect to every ``W_l``.

    Gradients are accumulated in reverse through the cached trace.

    Raises
    ------
    EmptyBatchError
        If the batch has no examples.
    LabelRangeError
        If a label is outside the output range.
    """
    trace = forward(net, batch.inputs)
    loss, delta = loss_with_gradient(trace.output, batch, loss_kind)
    grads: list[Matrix] = [np.empty(0)] * net.depth
    for i in range(net.depth - 1, -1, -1):
        delta = delta * _layer_derivatives(net, trace, i)
        grads[i] = delta @ trace.hidden[i].T
        if i > 0:
            delta = net.weights[i].T @ delta
    return loss, GradientSet(grads=grads)


def evaluate(net: Mlp, batch: Batch, loss_kind: LossKind | str) -> tuple[float, float]:
    """Return ``(loss, accuracy)``; accuracy is NaN when the batch has no labels."""
    trace = forward(net, batch.inputs)
    loss, _ = loss_with_gradient(trace.output, batch, loss_kind)
    if batch.labels is None:
        return loss, float("nan")
    predictions = np.argmax(trace.output, axis=0)
    return loss, float(np.mean(predictions == batch.labels))


def jacobian_layer_to_output(trace: ForwardTrace, net: Mlp, l: int) -> Matrix:
    """
    Jacobian of the output with respect to hidden state ``h_l``.

    Evaluates ``D_L W_L D_{L-1} W_{L-1} ... D_{l+1} W_{l+1}`` where ``D_k`` is
    the diagonal of ``phi'`` at ``z_k`` (identity for a linear output layer).
    The trace must hold a single example.

    Raises
    ------
    IndexError
        If ``l`` is outside ``[0, L-1]``.
    """
    if not 0 <= l <= net.depth - 1:
        raise IndexError(f"layer index {l} outside [0, {net.depth - 1}]")
    if trace.input.shape[1] != 1:
        raise ShapeMismatchError("Jacobian needs a single-example trace", trace.input.shape, (trace.input.shape[0], 1))
    last = net.depth - 1
    jac = _layer_derivatives(net, trace, last) * net.weights[last]
    for i in range(last - 1, l - 1, -1):
        jac = (jac * _layer_derivatives(net, trace, i).T) @ net.weights[i]
    return jac


def perturb(net: Mlp, deltas: Sequence[Matrix]) -> Mlp:
    """Fresh network with weights ``W_l + dW_l``; ``net`` is left untouched."""
    if len(deltas) != net.depth:
        raise ShapeMismatchError("one delta per layer required", (len(deltas),), (net.depth,))
    new = []
    for w, d in zip(net.weights, deltas, strict=True):
        if w.shape != np.shape(d):
            raise ShapeMismatchError("delta shape differs from weight", np.shape(d), w.shape)
        new.append(w + d)
    return net.with_weights(new)


def weight_deltas(net: Mlp, perturbed: Mlp) -> list[Matrix]:
    """``W~_l - W_l`` for two networks of the same architecture."""
    return [b - a for a, b in zip(net.weights, perturbed.weights, strict=True)]


# ---------------------------------------------------------------------------
# Finite-difference checkers
# ---------------------------------------------------------------------------


def relative_error(analytic: Matrix, numeric: Matrix) -> float:
    """``max|a - n| / max(max|a|, max|n|)``; zero when both vanish."""
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric))) / scale


def numerical_gradients(
    net: Mlp,
    batch: Batch,
    loss_kind: LossKind | str,
    *,
    max_entries_per_layer: int | None = None,
    seed: int = 0,
) -> tuple[list[Matrix], list[np.ndarray]]:
    """
    Central finite-difference gradients with step ``1e-6 * (1 + |w|)``.

    Returns
    -------
    tuple
        Per-layer gradient estimates and the flat indices that were sampled
        (all of them unless ``max_entries_per_layer`` samples a subset).
    """
    rng = np.random.default_rng(seed)
    estimates: list[Matrix] = []
    sampled: list[np.ndarray] = []
    for i, w in enumerate(net.weights):
        flat_indices = np.arange(w.size)
        if max_entries_per_layer is not None and w.size > max_entries_per_layer:
            flat_indices = np.sort(rng.choice(w.size, size=max_entries_per_layer, replace=False))
        estimate = np.zeros_like(w)
        for flat in flat_indices:
            idx = np.unravel_index(flat, w.shape)
            step = FD_STEP_SCALE * (1.0 + abs(w[idx]))
            values = []
            for sign in (1.0, -1.0):
                moved = w.copy()
                moved[idx] += sign * step
                weights = list(net.weights)
                weights[i] = moved
                loss, _ = loss_with_gradient(
                    forward(net.with_weights(weights), batch.inputs).output, batch, loss_kind
                )
                values.append(loss)
            estimate[idx] = (values[0] - values[1]) / (2.0 * step)
        estimates.append(estimate)
        sampled.append(flat_indices)
    return estimates, sampled


def gradient_check(
    net: Mlp,
    batch: Batch,
    loss_kind: LossKind | str,
    *,
    max_entries_per_layer: int | None = None,
    seed: int = 0,
) -> float:
    """Largest per-layer :func:`relative_error` between backprop and finite differences."""
    _, grads = loss_and_gradients(net, batch, loss_kind)
    estimates, sampled = numerical_gradients(
        net, batch, loss_kind, max_entries_per_layer=max_entries_per_layer, seed=seed
    )
    worst = 0.0
    for g, est, flat in zip(grads.grads, estimates, sampled, strict=True):
        worst = max(worst, relative_error(g.ravel()[flat], est.ravel()[flat]))
    return worst


def numerical_jacobian(net: Mlp, x: Matrix, l: int) -> Matrix:
    """Finite-difference Jacobian of the output with respect to ``h_l``."""
    h = forward(net, x).hidden[l]
    columns = []
    for j in range(h.shape[0]):
        step = FD_STEP_SCALE * (1.0 + abs(h[j, 0]))
        up = h.copy()
        down = h.copy()
        up[j, 0] += step
        down[j, 0] -= step
        columns.append((forward_from(net, up, l) - forward_from(net, down, l)) / (2.0 * step))
    return np.hstack(columns)
