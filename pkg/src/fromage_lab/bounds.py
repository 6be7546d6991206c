"""
Perturbation bounds for deep networks, evaluated next to the quantities they bound.

Every check returns a :class:`BoundComparison` holding the measured value, the
bound, and the constants (depth, layer, alpha, beta, kappa) it was computed with.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import attrs
import numpy as np

from .data import Batch, LossKind
from .exceptions import (
    BoundUndefinedError,
    ConditioningError,
    ShapeMismatchError,
    TransmissionError,
    ZeroGradientError,
)
from .linalg import Matrix, SpectralMethod, as_matrix, frobenius_norm, inner_product_frobenius, singular_extremes
from .net import (
    GradientSet,
    Mlp,
    evaluate,
    forward,
    jacobian_layer_to_output,
    loss_and_gradients,
    perturb,
    weight_deltas,
)

logger = logging.getLogger(__name__)

BOUND_RTOL = 1e-9
RELATIVE_SIZE_RTOL = 1e-12
DEFAULT_T_GRID = 64
REFINEMENT_RTOL = 0.01


@attrs.define(kw_only=True, frozen=True)
class BoundContext:
    """Constants a bound was evaluated with."""

    depth: int | None = None
    layer: int | None = None
    alpha: float = 1.0
    beta: float = 1.0
    kappa: float = 1.0


@attrs.define(kw_only=True, frozen=True)
class BoundComparison:
    """
    A measured quantity and the bound that should dominate it.

    Attributes
    ----------
    measured : float
        Left-hand side, evaluated directly.
    bound : float
        Right-hand side.
    context : BoundContext
        Depth, layer, transmission constants and the kappa used.
    hypothesis_violated : bool
        The network does not meet the assumptions of the bound (relu), so the
        comparison is informative only.
    grid_approximated : bool
        The bound contains a maximum taken over a finite grid.
    notes : tuple of str
        Caveats collected while evaluating, e.g. layers skipped in the kappa max.
    """

    measured: float
    bound: float
    context: BoundContext = attrs.field(factory=BoundContext)
    hypothesis_violated: bool = False
    grid_approximated: bool = False
    notes: tuple[str, ...] = attrs.field(default=(), converter=tuple)

    @property
    def satisfied(self) -> bool:
        return self.measured <= self.bound + BOUND_RTOL * abs(self.bound)

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    def scaled(self, factor: float) -> "BoundComparison":
        """Same comparison with the bound multiplied by ``factor``."""
        return attrs.evolve(self, bound=self.bound * factor)


def _relative_sizes(weights: Sequence[Matrix], deltas: Sequence[Matrix]) -> tuple[float, ...]:
    return tuple(frobenius_norm(d) / frobenius_norm(w) for w, d in zip(weights, deltas, strict=True))


@attrs.define(kw_only=True, frozen=True, eq=False)
class PerturbationSpec:
    """Per-layer deltas ``dW_k`` and their relative sizes ``||dW_k|| / ||W_k||``."""

    deltas: tuple[Matrix, ...] = attrs.field(converter=tuple)
    relative_sizes: tuple[float, ...] = attrs.field(converter=tuple)

    @relative_sizes.validator
    def _check_sizes(self, attribute: attrs.Attribute[tuple[float, ...]], value: tuple[float, ...]) -> None:
        if len(value) != len(self.deltas):
            raise ShapeMismatchError("one relative size per delta required", (len(value),), (len(self.deltas),))
        if any(r < 0.0 or not math.isfinite(r) for r in value):
            raise ValueError(f"relative sizes must be finite and nonnegative, got {value}")

    @classmethod
    def from_deltas(cls, net: Mlp, deltas: Sequence[Matrix]) -> "PerturbationSpec":
        deltas = tuple(as_matrix(d, name="delta") for d in deltas)
        return cls(deltas=deltas, relative_sizes=_relative_sizes(net.weights, deltas))

    @classmethod
    def random(
        cls, net: Mlp, r: float | Sequence[float], rng: np.random.Generator
    ) -> "PerturbationSpec":
        """Gaussian directions rescaled so layer ``k`` moves by ``r_k * ||W_k||``."""
        sizes = [float(r)] * net.depth if isinstance(r, (int, float)) else [float(v) for v in r]
        if len(sizes) != net.depth:
            raise ShapeMismatchError("one relative size per layer required", (len(sizes),), (net.depth,))
        deltas = []
        for w, size in zip(net.weights, sizes, strict=True):
            direction = rng.standard_normal(w.shape)
            deltas.append(direction * (size * frobenius_norm(w) / frobenius_norm(direction)))
        return cls.from_deltas(net, deltas)

    def check(self, net: Mlp) -> None:
        """Raise ``ValueError`` if the stored sizes disagree with the deltas."""
        recomputed = _relative_sizes(net.weights, self.deltas)
        for k, (stored, fresh) in enumerate(zip(self.relative_sizes, recomputed, strict=True)):
            if abs(stored - fresh) > RELATIVE_SIZE_RTOL * max(abs(fresh), 1e-300):
                raise ValueError(f"layer {k}: stored relative size {stored!r} differs from {fresh!r}")

    def apply(self, net: Mlp) -> Mlp:
        return perturb(net, self.deltas)


def drt_model(r: Sequence[float]) -> float:
    """
    Deep-relative-trust model of relative gradient breakdown, ``prod(1 + r_k) - 1``.
    """
    values = [float(v) for v in r]
    if any(v < 0.0 for v in values):
        raise ValueError(f"relative sizes must be nonnegative, got {values}")
    return math.prod(1.0 + v for v in values) - 1.0


def descent_threshold(depth: int, cos_theta: float) -> float:
    """
    Largest per-layer relative step ``(1 + cos_theta) ** (1 / L) - 1`` that still
    guarantees descent under the deep-relative-trust model.

    Returns ``-1`` (and logs a warning) when ``cos_theta == -1``.
    """
    if depth < 1:
        raise ValueError(f"depth must be positive, got {depth}")
    if not -1.0 <= cos_theta <= 1.0:
        raise ValueError(f"cos_theta must lie in [-1, 1], got {cos_theta}")
    if cos_theta == -1.0:
        logger.warning("descent threshold is degenerate for cos_theta = -1")
        return -1.0
    return (1.0 + cos_theta) ** (1.0 / depth) - 1.0


def toy_scalar_bound(a: float, b: float, da: float, db: float) -> BoundComparison:
    """
    Relative change of the product ``a * b`` under ``(a + da)(b + db)``.

    The bound ``(1 + |da|/|a|)(1 + |db|/|b|) - 1`` is attained when both
    perturbations have the same sign as their parameters.
    """
    if a == 0.0 or b == 0.0:
        raise BoundUndefinedError("toy bound needs nonzero a and b")
    measured = abs((a + da) * (b + db) - a * b) / abs(a * b)
    bound = (1.0 + abs(da) / abs(a)) * (1.0 + abs(db) / abs(b)) - 1.0
    return BoundComparison(measured=measured, bound=bound, context=BoundContext(depth=2))


def _check_same_architecture(net: Mlp, perturbed: Mlp) -> None:
    if net.config.widths != perturbed.config.widths:
        raise ShapeMismatchError("networks differ in architecture", net.config.widths, perturbed.config.widths)


def _transmission(net: Mlp, alpha: float | None, beta: float | None) -> tuple[float, float, bool]:
    phi = net.nonlinearity
    alpha = phi.alpha if alpha is None else float(alpha)
    beta = phi.beta if beta is None else float(beta)
    if alpha <= 0.0:
        raise TransmissionError(f"transmission constant alpha must be positive, got {alpha}")
    if beta < alpha:
        raise TransmissionError(f"transmission constants need alpha <= beta, got {alpha} > {beta}")
    violated = phi.violates_transmission
    if violated:
        logger.warning(f"{phi} does not satisfy the transmission hypothesis; bound is informative only")
    return alpha, beta, violated


def network_kappa(
    net: Mlp, perturbed: Mlp, *, method: SpectralMethod = "lapack"
) -> tuple[float, tuple[str, ...]]:
    """
    Largest condition number over every ``W_l``, ``W~_l`` and nonzero ``dW_l``.

    Zero deltas are skipped and reported in the returned notes.
    """
    kappa = 1.0
    notes = []
    for k, (w, wt, d) in enumerate(zip(net.weights, perturbed.weights, weight_deltas(net, perturbed), strict=True)):
        kappa = max(kappa, singular_extremes(w, method=method).kappa, singular_extremes(wt, method=method).kappa)
        if frobenius_norm(d) == 0.0:
            notes.append(f"layer {k}: zero perturbation excluded from kappa")
            continue
        kappa = max(kappa, singular_extremes(d, method=method).kappa)
    return kappa, tuple(notes)


def _amplified(base: float, power: int, bracket: float) -> float:
    if bracket == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        return float(np.float64(base) ** power * bracket)


def functional_bound(
    net: Mlp,
    perturbed: Mlp,
    x: Matrix,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    method: SpectralMethod = "lapack",
) -> BoundComparison:
    """
    Relative change of the network output against
    ``(beta / alpha * kappa**2) ** L * (prod(1 + r_k) - 1)``.

    Parameters
    ----------
    net, perturbed : Mlp
        Original and perturbed networks of the same architecture.
    x : numpy.ndarray
        Input column(s); the Frobenius norm is used for several columns.
    alpha, beta : float, optional
        Transmission constants; default to those of the network nonlinearity.
    method : {"lapack", "jacobi"}
        Singular value backend used for kappa.

    Raises
    ------
    BoundUndefinedError
        If ``f(x) = 0``.
    TransmissionError
        If ``alpha`` is zero.
    """
    _check_same_architecture(net, perturbed)
    alpha, beta, violated = _transmission(net, alpha, beta)
    out = forward(net, x).output
    out_perturbed = forward(perturbed, x).output
    denom = frobenius_norm(out)
    if denom == 0.0:
        raise BoundUndefinedError("relative difference undefined: f(x) = 0")
    measured = frobenius_norm(out_perturbed - out) / denom

    r = _relative_sizes(net.weights, weight_deltas(net, perturbed))
    kappa, notes = network_kappa(net, perturbed, method=method)
    bound = _amplified(beta / alpha * kappa**2, net.depth, drt_model(r))
    return BoundComparison(
        measured=measured,
        bound=bound,
        context=BoundContext(depth=net.depth, alpha=alpha, beta=beta, kappa=kappa),
        hypothesis_violated=violated,
        notes=notes,
    )


def jacobian_bound(
    net: Mlp,
    perturbed: Mlp,
    x: Matrix,
    l: int,
    *,
    alpha: float | None = None,
    beta: float | None = None,
    method: SpectralMethod = "lapack",
) -> BoundComparison:
    """
    Relative change of the hidden-state-``l``-to-output Jacobian against
    ``(beta/alpha * kappa**2) ** (L - l) * (prod_{k > l} (beta/alpha)(1 + r_k) - 1)``.

    With ``beta > alpha`` the bound stays positive for a zero perturbation.
    """
    _check_same_architecture(net, perturbed)
    alpha, beta, violated = _transmission(net, alpha, beta)
    x = as_matrix(x, name="x")
    jac = jacobian_layer_to_output(forward(net, x), net, l)
    jac_perturbed = jacobian_layer_to_output(forward(perturbed, x), perturbed, l)
    denom = frobenius_norm(jac)
    if denom == 0.0:
        raise BoundUndefinedError(f"relative difference undefined: Jacobian at layer {l} is zero")
    measured = frobenius_norm(jac_perturbed - jac) / denom

    r = _relative_sizes(net.weights, weight_deltas(net, perturbed))
    ratio = beta / alpha
    bracket = math.prod(ratio * (1.0 + r_k) for r_k in r[l:]) - 1.0
    kappa, notes = network_kappa(net, perturbed, method=method)
    bound = _amplified(ratio * kappa**2, net.depth - l, bracket)
    return BoundComparison(
        measured=measured,
        bound=bound,
        context=BoundContext(depth=net.depth, layer=l, alpha=alpha, beta=beta, kappa=kappa),
        hypothesis_violated=violated,
        notes=notes,
    )


def matrix_conditioning_check(
    mt: Matrix, m: Matrix, x: Matrix, y: Matrix, kappa_cap: float, *, method: SpectralMethod = "lapack"
) -> BoundComparison:
    """
    ``||M~ X|| / ||M Y||`` against ``kappa_cap**2 * ||M~|| ||X|| / (||M|| ||Y||)``.

    ``M~`` and ``M`` must share a tall (rows >= cols) shape and both have
    condition number at most ``kappa_cap``. ``X`` and ``Y`` are unconstrained
    and may be rank deficient.
    """
    mt, m, x, y = (as_matrix(a, name=n) for a, n in ((mt, "Mt"), (m, "M"), (x, "X"), (y, "Y")))
    if mt.shape != m.shape:
        raise ShapeMismatchError("Mt and M must have the same shape", mt.shape, m.shape)
    if m.shape[0] < m.shape[1]:
        raise ShapeMismatchError("M must have at least as many rows as columns", m.shape)
    if x.shape[0] != m.shape[1] or y.shape[0] != m.shape[1]:
        raise ShapeMismatchError("X and Y rows must equal M columns", x.shape, y.shape, m.shape)
    notes = []
    for name, a in (("Mt", mt), ("M", m)):
        kappa = singular_extremes(a, method=method).kappa
        if kappa > kappa_cap * (1.0 + BOUND_RTOL):
            raise ConditioningError(name, kappa, kappa_cap)
    denom = frobenius_norm(m @ y)
    if denom == 0.0:
        raise BoundUndefinedError("relative conditioning undefined: ||M Y|| = 0")
    measured = frobenius_norm(mt @ x) / denom
    bound = kappa_cap**2 * frobenius_norm(mt) * frobenius_norm(x) / (frobenius_norm(m) * frobenius_norm(y))
    if np.linalg.matrix_rank(x) < min(x.shape) or np.linalg.matrix_rank(y) < min(y.shape):
        notes.append("X or Y is rank deficient")
    return BoundComparison(
        measured=measured, bound=bound, context=BoundContext(kappa=kappa_cap), notes=notes
    )


def _gradients_at(net: Mlp, deltas: Sequence[Matrix], t: float, batch: Batch, loss_kind: LossKind | str) -> GradientSet:
    return loss_and_gradients(perturb(net, [t * d for d in deltas]), batch, loss_kind)[1]


def _require_nonzero(grads: GradientSet, layers: Sequence[int]) -> None:
    for k in layers:
        if grads.norms[k] == 0.0:
            raise ZeroGradientError(k)


def gradient_breakdown_measured(
    net: Mlp, deltas: Sequence[Matrix], batch: Batch, loss_kind: LossKind | str, l: int
) -> float:
    """
    Relative gradient breakdown ``||g_l(W + dW) - g_l(W)|| / ||g_l(W)||`` of
    layer ``l`` (zero-based) on the whole batch.
    """
    _, grads = loss_and_gradients(net, batch, loss_kind)
    _require_nonzero(grads, [l])
    moved = _gradients_at(net, deltas, 1.0, batch, loss_kind)
    return frobenius_norm(moved[l] - grads[l]) / grads.norms[l]


def _max_breakdown(
    net: Mlp,
    deltas: Sequence[Matrix],
    grads: GradientSet,
    batch: Batch,
    loss_kind: LossKind | str,
    grid: np.ndarray,
) -> np.ndarray:
    worst = np.zeros(net.depth)
    for t in grid:
        moved = grads if t == 0.0 else _gradients_at(net, deltas, float(t), batch, loss_kind)
        for k in range(net.depth):
            worst[k] = max(worst[k], frobenius_norm(moved[k] - grads[k]) / grads.norms[k])
    return worst


def descent_inequality_check(
    net: Mlp,
    deltas: Sequence[Matrix],
    batch: Batch,
    loss_kind: LossKind | str,
    t_grid_size: int = DEFAULT_T_GRID,
    *,
    refine: bool = True,
) -> BoundComparison:
    """
    Loss change ``L(W + dW) - L(W)`` against
    ``-sum_l ||g_l|| ||dW_l|| (cos theta_l - max_t breakdown_l(t))``.

    ``theta_l`` is the angle between ``dW_l`` and ``-g_l``. The maximum over
    ``t`` in ``[0, 1]`` is taken on a uniform grid of ``t_grid_size`` points.
    With ``refine`` the grid is also evaluated at ``2 * t_grid_size - 1``
    points; a change of 1% or more in any layer's maximum is logged and noted.

    Raises
    ------
    ZeroGradientError
        If any layer gradient is zero.
    """
    if t_grid_size < 2:
        raise ValueError(f"t_grid_size must be at least 2, got {t_grid_size}")
    if len(deltas) != net.depth:
        raise ShapeMismatchError("one delta per layer required", (len(deltas),), (net.depth,))
    loss, grads = loss_and_gradients(net, batch, loss_kind)
    _require_nonzero(grads, range(net.depth))
    perturbed_loss, _ = evaluate(perturb(net, deltas), batch, loss_kind)
    lhs = perturbed_loss - loss

    grid = np.linspace(0.0, 1.0, t_grid_size)
    worst = _max_breakdown(net, deltas, grads, batch, loss_kind, grid)
    notes = [f"max over t on a {t_grid_size}-point grid"]
    if refine:
        fine = _max_breakdown(net, deltas, grads, batch, loss_kind, np.linspace(0.0, 1.0, 2 * t_grid_size - 1))
        change = float(np.max(np.abs(fine - worst) / np.maximum(fine, np.finfo(float).tiny)))
        if change >= REFINEMENT_RTOL:
            logger.warning(f"refining the t grid changed the breakdown maximum by {change:.2%}")
            notes.append(f"grid refinement changed the maximum by {change:.2%}")

    rhs = 0.0
    for k, d in enumerate(deltas):
        d_norm = frobenius_norm(d)
        if d_norm == 0.0:
            continue
        g_norm = grads.norms[k]
        cos_theta = -inner_product_frobenius(grads[k], d) / (g_norm * d_norm)
        rhs -= g_norm * d_norm * (cos_theta - worst[k])
    return BoundComparison(
        measured=lhs,
        bound=rhs,
        context=BoundContext(depth=net.depth),
        grid_approximated=True,
        notes=notes,
    )
