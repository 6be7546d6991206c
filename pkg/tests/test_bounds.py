"""Tests for the perturbation bounds and the descent threshold."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fromage_lab.bounds import (
    BoundComparison,
    PerturbationSpec,
    descent_inequality_check,
    descent_threshold,
    drt_model,
    functional_bound,
    gradient_breakdown_measured,
    jacobian_bound,
    matrix_conditioning_check,
    network_kappa,
    toy_scalar_bound,
)
from fromage_lab.data import Batch
from fromage_lab.exceptions import (
    BoundUndefinedError,
    ConditioningError,
    ShapeMismatchError,
    TransmissionError,
    ZeroGradientError,
)
from fromage_lab.net import GradientSet, Mlp, MlpConfig, Nonlinearity, loss_and_gradients
from fromage_lab.optim import OptimizerState, fromage_step
from tests.helpers import make_net

LEAKY = [Nonlinearity.leaky_relu(a) for a in (0.25, 0.5, 1.0)]


def _scalar_net(*values: float) -> Mlp:
    config = MlpConfig(widths=(1,) * (len(values) + 1), nonlinearity=Nonlinearity.identity())
    return Mlp(config=config, weights=[np.array([[v]]) for v in values])


class TestComparison:
    def test_satisfied_uses_relative_tolerance(self):
        assert BoundComparison(measured=1.0 + 1e-10, bound=1.0).satisfied
        assert not BoundComparison(measured=1.0 + 1e-8, bound=1.0).satisfied
        assert BoundComparison(measured=0.0, bound=0.0).satisfied

    def test_slack_and_scaling(self):
        comparison = BoundComparison(measured=0.5, bound=2.0)
        assert comparison.slack == 1.5
        assert comparison.scaled(0.1).bound == pytest.approx(0.2)
        assert not comparison.scaled(0.1).satisfied


class TestToyBound:
    def test_same_signs_saturate(self):
        result = toy_scalar_bound(1.0, 1.0, 0.1, 0.1)
        assert result.measured == pytest.approx(0.21, abs=1e-12)
        assert result.bound == pytest.approx(0.21, abs=1e-12)
        assert result.satisfied

    def test_opposite_signs_leave_slack(self):
        result = toy_scalar_bound(1.0, 1.0, 0.1, -0.1)
        assert result.measured == pytest.approx(0.01, abs=1e-12)
        assert result.bound == pytest.approx(0.21, abs=1e-12)
        assert result.slack > 0.19

    def test_zero_perturbation(self):
        result = toy_scalar_bound(2.0, -3.0, 0.0, 0.0)
        assert (result.measured, result.bound) == (0.0, 0.0)

    def test_zero_factor(self):
        with pytest.raises(BoundUndefinedError):
            toy_scalar_bound(0.0, 1.0, 0.1, 0.1)

    @settings(max_examples=100, deadline=None)
    @given(
        a=st.floats(0.1, 10.0),
        b=st.floats(-10.0, -0.1),
        r=st.floats(1e-3, 1.0),
        s=st.floats(1e-3, 1.0),
    )
    def test_bound_holds_for_any_signs(self, a, b, r, s):
        assert toy_scalar_bound(a, b, r * a, -s * b).satisfied
        assert toy_scalar_bound(a, b, r * a, s * b).satisfied


class TestFunctionalBound:
    @pytest.mark.parametrize("da,db", [(0.1, 0.1), (0.1, -0.1), (-0.3, 0.05), (0.0, 0.2)])
    def test_scalar_identity_net_reduces_to_toy_bound(self, da, db):
        net = _scalar_net(1.5, -0.8)
        perturbed = _scalar_net(1.5 + da, -0.8 + db)
        result = functional_bound(net, perturbed, np.array([[2.0]]))
        toy = toy_scalar_bound(1.5, -0.8, da, db)
        assert result.measured == pytest.approx(toy.measured, abs=1e-12)
        assert result.bound == pytest.approx(toy.bound, abs=1e-12)
        assert result.context.kappa == 1.0

    def test_zero_perturbation(self):
        net = make_net((4, 5, 3), seed=1)
        result = functional_bound(net, net.with_weights(net.weights), np.ones((4, 1)))
        assert result.measured == 0.0
        assert result.bound == 0.0
        assert len(result.notes) == 2

    @pytest.mark.parametrize("phi", LEAKY, ids=str)
    @pytest.mark.parametrize("depth", [1, 2, 4])
    @pytest.mark.parametrize("r", [0.001, 0.01, 0.1])
    def test_holds_on_random_networks(self, phi, depth, r):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            net = make_net((8,) * (depth + 1), phi, seed=seed)
            perturbed = PerturbationSpec.random(net, r, rng).apply(net)
            result = functional_bound(net, perturbed, rng.standard_normal((8, 1)))
            assert result.satisfied, (seed, result)
            assert not result.hypothesis_violated

    def test_jacobi_backend_agrees(self, rng):
        net = make_net((6, 6, 6), seed=2)
        perturbed = PerturbationSpec.random(net, 0.05, rng).apply(net)
        x = rng.standard_normal((6, 1))
        lapack = functional_bound(net, perturbed, x)
        jacobi = functional_bound(net, perturbed, x, method="jacobi")
        assert jacobi.context.kappa == pytest.approx(lapack.context.kappa, rel=1e-9)

    def test_relu_is_flagged(self, rng):
        net = make_net((6, 6, 6), Nonlinearity.relu(), seed=2)
        perturbed = PerturbationSpec.random(net, 0.05, rng).apply(net)
        x = np.abs(rng.standard_normal((6, 1)))
        try:
            result = functional_bound(net, perturbed, x)
        except BoundUndefinedError:
            pytest.skip("relu network output vanished for this draw")
        assert result.hypothesis_violated

    def test_errors(self):
        net = _scalar_net(1.0, 1.0)
        with pytest.raises(BoundUndefinedError, match="relative difference undefined"):
            functional_bound(net, net, np.array([[0.0]]))
        with pytest.raises(TransmissionError):
            functional_bound(net, net, np.array([[1.0]]), alpha=0.0)
        with pytest.raises(ShapeMismatchError):
            functional_bound(net, _scalar_net(1.0), np.array([[1.0]]))


class TestJacobianBound:
    def test_identity_zero_perturbation_is_exactly_zero(self):
        net = make_net((3, 4, 2), Nonlinearity.identity())
        result = jacobian_bound(net, net.with_weights(net.weights), np.ones((3, 1)), 0)
        assert result.measured == 0.0
        assert result.bound == 0.0

    def test_zero_perturbation_bound_stays_positive_when_beta_exceeds_alpha(self):
        net = make_net((4, 4, 4, 4), Nonlinearity.leaky_relu(0.5), seed=3)
        result = jacobian_bound(net, net.with_weights(net.weights), np.ones((4, 1)), 1)
        kappa = result.context.kappa
        assert result.measured == 0.0
        assert result.bound == pytest.approx((2.0 * kappa**2) ** 2 * (2.0**2 - 1.0))

    @pytest.mark.parametrize("phi", LEAKY, ids=str)
    @pytest.mark.parametrize("r", [0.01, 0.1])
    def test_holds_for_every_layer(self, phi, r):
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            net = make_net((8,) * 5, phi, seed=seed)
            perturbed = PerturbationSpec.random(net, r, rng).apply(net)
            x = rng.standard_normal((8, 1))
            for l in range(net.depth):
                result = jacobian_bound(net, perturbed, x, l)
                assert result.satisfied, (seed, l, result)
                assert result.context.layer == l


class TestConditioning:
    def test_identity_equality(self):
        eye = np.eye(3)
        result = matrix_conditioning_check(eye, eye, eye, eye, 1.0)
        assert result.measured == pytest.approx(1.0)
        assert result.bound == pytest.approx(1.0)
        assert result.satisfied

    def test_diagonal_example(self):
        result = matrix_conditioning_check(np.diag([3.0, 2.0]), np.diag([2.0, 1.0]), np.eye(2), np.eye(2), 2.0)
        assert result.measured == pytest.approx(math.sqrt(13.0) / math.sqrt(5.0))
        assert result.bound == pytest.approx(4.0 * math.sqrt(13.0) / math.sqrt(5.0))

    def test_cap_is_enforced(self):
        with pytest.raises(ConditioningError) as info:
            matrix_conditioning_check(np.diag([3.0, 2.0]), np.diag([4.0, 1.0]), np.eye(2), np.eye(2), 2.0)
        assert info.value.name == "M"
        assert info.value.kappa == pytest.approx(4.0)

    def test_shape_and_denominator_errors(self):
        with pytest.raises(ShapeMismatchError):
            matrix_conditioning_check(np.ones((2, 3)), np.ones((2, 3)), np.eye(3), np.eye(3), 10.0)
        with pytest.raises(BoundUndefinedError):
            matrix_conditioning_check(np.eye(2), np.eye(2), np.eye(2), np.zeros((2, 2)), 1.0)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), rank_one=st.booleans(), cols=st.integers(1, 4))
    def test_holds_with_measured_cap(self, seed, rank_one, cols):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((5, cols))
        mt = m + 0.3 * rng.standard_normal((5, cols))
        if rank_one:
            x = np.outer(rng.standard_normal(cols), rng.standard_normal(4))
            y = np.outer(rng.standard_normal(cols), rng.standard_normal(4))
        else:
            x = rng.standard_normal((cols, 4))
            y = rng.standard_normal((cols, 4))
        cap = max(np.linalg.cond(m), np.linalg.cond(mt))
        result = matrix_conditioning_check(mt, m, x, y, cap)
        assert result.satisfied


class TestDrtModelAndThreshold:
    def test_drt_model_values(self):
        assert drt_model([0.0, 0.0]) == 0.0
        assert drt_model([0.01]) == pytest.approx(0.01)
        assert drt_model([0.01] * 16) == pytest.approx(1.01**16 - 1.0)
        assert drt_model([0.01] * 16) == pytest.approx(0.1726, abs=1e-4)
        with pytest.raises(ValueError):
            drt_model([0.1, -0.1])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 0.1), min_size=1, max_size=5))
    def test_drt_model_is_first_order_sum(self, r):
        total = sum(r)
        assert abs(drt_model(r) - total) <= total**2 + 1e-15
        bumped = [r[0] + 0.01, *r[1:]]
        assert drt_model(bumped) >= drt_model(r)

    def test_threshold_values(self):
        assert descent_threshold(1, 1.0) == 1.0
        assert descent_threshold(16, 1.0) == pytest.approx(2.0 ** (1.0 / 16.0) - 1.0, abs=1e-12)
        assert descent_threshold(16, 1.0) == pytest.approx(0.04427, abs=1e-5)
        for depth in (1, 2, 8, 50):
            assert descent_threshold(depth, 0.0) == 0.0
        assert descent_threshold(4, -1.0) == -1.0

    def test_threshold_monotonicity(self):
        cosines = np.linspace(-0.9, 1.0, 12)
        depths = [1, 2, 4, 8, 16, 32]
        for c in cosines:
            values = [descent_threshold(d, float(c)) for d in depths]
            if c > 0:
                assert all(a > b for a, b in zip(values, values[1:]))
        for d in depths:
            values = [descent_threshold(d, float(c)) for c in cosines]
            assert all(a < b for a, b in zip(values, values[1:]))

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            descent_threshold(0, 1.0)
        with pytest.raises(ValueError):
            descent_threshold(2, 1.5)


class TestPerturbationSpec:
    def test_random_spec_has_requested_sizes(self, rng):
        net = make_net((5, 6, 3), seed=1)
        spec = PerturbationSpec.random(net, [0.1, 0.02], rng)
        assert spec.relative_sizes == pytest.approx((0.1, 0.02), rel=1e-12)
        spec.check(net)

    def test_check_detects_stale_sizes(self, rng):
        net = make_net((5, 6, 3), seed=1)
        spec = PerturbationSpec.random(net, 0.1, rng)
        stale = PerturbationSpec(deltas=spec.deltas, relative_sizes=(0.1 * (1 + 1e-9), 0.1))
        with pytest.raises(ValueError, match="layer 0"):
            stale.check(net)

    def test_rejects_negative_sizes(self):
        with pytest.raises(ValueError):
            PerturbationSpec(deltas=[np.zeros((1, 1))], relative_sizes=[-0.1])

    def test_kappa_skips_zero_deltas(self, rng):
        net = make_net((4, 4, 4), seed=5)
        deltas = [np.zeros((4, 4)), 0.01 * rng.standard_normal((4, 4))]
        kappa, notes = network_kappa(net, PerturbationSpec.from_deltas(net, deltas).apply(net))
        assert kappa >= 1.0
        assert notes == ("layer 0: zero perturbation excluded from kappa",)


class TestDescentInequality:
    def test_quadratic_path(self):
        # L(w) = w^2 / 2 through a depth-1 identity net with x = 1 and target 0
        batch = Batch.from_arrays(np.array([[1.0]]), targets=np.array([[0.0]]))
        for eta in (0.01, 0.1, 0.5, 1.0):
            net = _scalar_net(1.3)
            result = descent_inequality_check(net, [np.array([[-eta * 1.3]])], batch, "mean_squared_error")
            w2 = 1.3**2
            assert result.measured == pytest.approx(-eta * w2 + 0.5 * eta**2 * w2)
            assert result.bound == pytest.approx(-eta * w2 + eta**2 * w2)
            assert result.satisfied
            assert result.grid_approximated

    def test_zero_step(self, blobs):
        net = make_net((6, 8, 3), seed=0)
        deltas = [np.zeros_like(w) for w in net.weights]
        result = descent_inequality_check(net, deltas, blobs.full_batch(), "softmax_cross_entropy", 8)
        assert result.measured == 0.0
        assert result.bound == 0.0

    def test_small_fromage_step_satisfies_lemma(self, blobs):
        net = make_net((6, 8, 8, 3), seed=4)
        batch = blobs.full_batch()
        _, grads = loss_and_gradients(net, batch, "softmax_cross_entropy")
        stepped = fromage_step(net, grads, OptimizerState.create("fromage", 0.001, net))
        deltas = [b - a for a, b in zip(net.weights, stepped.weights, strict=True)]
        result = descent_inequality_check(net, deltas, batch, "softmax_cross_entropy", 16)
        assert result.satisfied
        assert result.measured < 0.0

    def test_zero_gradient_layer(self):
        net = _scalar_net(1.0)
        batch = Batch.from_arrays(np.array([[1.0]]), targets=np.array([[1.0]]))
        with pytest.raises(ZeroGradientError):
            descent_inequality_check(net, [np.array([[0.1]])], batch, "mean_squared_error")
        with pytest.raises(ValueError):
            descent_inequality_check(net, [np.array([[0.1]])], batch, "mean_squared_error", 1)


class TestGradientBreakdown:
    def test_zero_delta(self, blobs):
        net = make_net((6, 8, 3), seed=0)
        deltas = [np.zeros_like(w) for w in net.weights]
        assert gradient_breakdown_measured(net, deltas, blobs.full_batch(), "softmax_cross_entropy", 0) == 0.0

    def test_linear_model_grows_linearly(self):
        # One linear layer with MSE: g(W) = (W x - y) x^T is affine in W.
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 4))
        y = rng.standard_normal((2, 4))
        config = MlpConfig(widths=(3, 2), nonlinearity=Nonlinearity.identity())
        net = Mlp(config=config, weights=[rng.standard_normal((2, 3))])
        batch = Batch.from_arrays(x, targets=y)
        direction = rng.standard_normal((2, 3))
        small = gradient_breakdown_measured(net, [0.01 * direction], batch, "mean_squared_error", 0)
        large = gradient_breakdown_measured(net, [0.04 * direction], batch, "mean_squared_error", 0)
        assert large == pytest.approx(4.0 * small, rel=1e-9)

    def test_zero_gradient(self):
        net = _scalar_net(1.0)
        batch = Batch.from_arrays(np.array([[1.0]]), targets=np.array([[1.0]]))
        with pytest.raises(ZeroGradientError):
            gradient_breakdown_measured(net, [np.array([[0.1]])], batch, "mean_squared_error", 0)


def test_gradient_set_norms_are_cached():
    grads = GradientSet(grads=[np.array([[3.0, 4.0]])])
    assert grads.norms == (5.0,)
