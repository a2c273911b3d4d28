#!/usr/bin/env python3
"""
Test suite for the parameter containers, the residual MLP and the output heads
"""

import math
import os
import sys

import numpy as np
import pytest
from scipy import integrate, stats

# Add the repository root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from distributional import AtomGrid
from errors import ConfigurationError, InternalError, NumericError, ValidationError
from nn.gradcheck import numerical_gradient, relative_error, sample_coordinates
from nn.heads import (
    CategoricalValueHead,
    MixtureGaussianHead,
    MoGPolicy,
    SoftmaxPolicyHead,
    mog_deterministic,
    mog_log_prob,
    mog_sample,
)
from nn.layers import (
    LAYER_NORM_EPS,
    ResidualMlpSpec,
    activation_pattern,
    backward,
    build_layout,
    forward,
    init_params,
    layer_norm_backward,
    layer_norm_forward,
    linear_backward,
)
from nn.params import ParamLayout, Params

H = 1e-5


def reference_forward(spec, params, x):
    """Row-at-a-time forward pass with explicit loops over units."""

    def dense(v, name):
        w, b = params.view(f"{name}/w"), params.view(f"{name}/b")
        return [sum(v[i] * w[i, j] for i in range(w.shape[0])) + b[j] for j in range(w.shape[1])]

    rows = []
    for row in np.atleast_2d(x):
        h = dense(list(row), "input")
        for k in range(spec.n_blocks):
            z = dense(h, f"block{k}")
            mean = sum(z) / len(z)
            var = sum((v - mean) ** 2 for v in z) / len(z)
            gain, offset = params.view(f"block{k}/ln_gain"), params.view(f"block{k}/ln_offset")
            h = [h[j] + max(0.0, (z[j] - mean) / math.sqrt(var + LAYER_NORM_EPS) * gain[j] + offset[j]) for j in range(len(z))]
        rows.append(dense(h, "output"))
    return np.array(rows)


def smooth_coordinates(spec, params, x, coords):
    """Coordinates whose +-H perturbation keeps every rectifier on the same side."""
    _, tape = forward(spec, params, x)
    base = activation_pattern(tape)
    kept = []
    for i in coords:
        same = True
        for sign in (1.0, -1.0):
            values = params.values.copy()
            values[i] += sign * H
            _, moved = forward(spec, params.with_values(values), x)
            same = same and np.array_equal(activation_pattern(moved), base)
        if same:
            kept.append(int(i))
    return kept


class TestParams:
    """Flat parameter vectors"""

    def test_views_write_through(self):
        """Test named views write through to the flat vector"""
        layout = ParamLayout([("w", (2, 3)), ("b", (3,))])
        params = Params(layout)
        params.view("w")[1, 2] = 5.0
        assert params.values[5] == 5.0
        assert len(params) == 9

    def test_duplicate_name_rejected(self):
        """Test duplicate parameter names"""
        layout = ParamLayout([("w", (2,))])
        with pytest.raises(ValidationError):
            layout.add("w", (3,))

    def test_wrong_vector_size_rejected(self):
        """Test vector size must match the layout"""
        with pytest.raises(ValidationError):
            Params(ParamLayout([("w", (2,))]), np.zeros(3))

    def test_copy_is_independent(self):
        """Test copies do not share memory"""
        params = Params(ParamLayout([("w", (2,))]), np.ones(2))
        clone = params.copy()
        clone.values[0] = 7.0
        assert params.values[0] == 1.0

    def test_check_finite(self):
        """Test non-finite parameters are rejected"""
        params = Params(ParamLayout([("w", (2,))]), np.array([1.0, np.inf]))
        with pytest.raises(NumericError):
            params.check_finite()


class TestLayers:
    """Residual MLP forward and backward passes"""

    def test_layer_norm_backward(self):
        """Test layer norm backward against central differences"""
        rng = np.random.default_rng(0)
        z = rng.normal(size=(3, 6))
        gain, offset = rng.normal(size=6), rng.normal(size=6)
        weights = rng.normal(size=(3, 6))
        _, cache = layer_norm_forward(z, gain, offset)
        grad_z, _, _ = layer_norm_backward(weights, cache)
        numeric = numerical_gradient(lambda v: float(np.sum(layer_norm_forward(v.reshape(3, 6), gain, offset)[0] * weights)), z.ravel())
        assert np.max(relative_error(grad_z.ravel(), numeric, floor=1e-5)) < 1e-4

    def test_output_shapes(self):
        """Test network output shapes"""
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=2)
        params = init_params(spec, np.random.default_rng(1))
        out, _ = forward(spec, params, np.zeros((5, 3)))
        assert out.shape == (5, 4)
        single, _ = forward(spec, params, np.zeros(3))
        assert single.shape == (4,)

    def test_parameter_gradient_matches_finite_difference(self):
        """Test parameter gradient against central differences"""
        rng = np.random.default_rng(2)
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=2)
        params = init_params(spec, rng)
        x = rng.normal(size=(5, 3))
        weights = rng.normal(size=(5, 4))
        _, tape = forward(spec, params, x)
        analytic = backward(spec, params, tape, weights)

        def f(values):
            return float(np.sum(forward(spec, params.with_values(values), x)[0] * weights))

        coords = smooth_coordinates(spec, params, x, sample_coordinates(rng, len(params), 200))
        assert len(coords) >= 150
        numeric = numerical_gradient(f, params.values, coords, h=H)
        assert np.max(relative_error(analytic[coords], numeric, floor=1e-5)) < 1e-4

    def test_input_gradient(self):
        """Test input gradient against central differences"""
        rng = np.random.default_rng(3)
        spec = ResidualMlpSpec(3, 2, hidden_width=8, n_blocks=1)
        params = init_params(spec, rng)
        x = rng.normal(size=3)
        weights = rng.normal(size=2)
        _, tape = forward(spec, params, x)
        _, dx = backward(spec, params, tape, weights, return_input_grad=True)
        numeric = numerical_gradient(lambda v: float(forward(spec, params, v)[0] @ weights), x, h=H)
        assert dx.shape == (3,)
        assert np.max(relative_error(dx, numeric, floor=1e-5)) < 1e-3

    def test_output_scale_shrinks_last_layer(self):
        """Test output scale at initialisation"""
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=1)
        params = init_params(spec, np.random.default_rng(4), output_scale=0.1)
        assert np.max(np.abs(params.view("output/w"))) <= 0.1 / np.sqrt(8)
        np.testing.assert_array_equal(params.view("block0/ln_gain"), 1.0)

    def test_wrong_input_dimension(self):
        """Test wrong input width"""
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=1)
        params = init_params(spec, np.random.default_rng(5))
        with pytest.raises(ConfigurationError):
            forward(spec, params, np.zeros(2))

    def test_non_finite_input(self):
        """Test non-finite inputs"""
        spec = ResidualMlpSpec(1, 1, hidden_width=4, n_blocks=1)
        params = init_params(spec, np.random.default_rng(6))
        with pytest.raises(NumericError):
            forward(spec, params, np.array([np.nan]))

    def test_invalid_spec(self):
        """Test invalid network settings"""
        with pytest.raises(ConfigurationError):
            ResidualMlpSpec(3, 4, n_blocks=0)

    def test_zero_parameters_give_zero_output(self):
        """Test that all-zero weights, biases and gains map any input to zero"""
        spec = ResidualMlpSpec(3, 2, hidden_width=6, n_blocks=2)
        params = Params(build_layout(spec))
        out, _ = forward(spec, params, np.random.default_rng(30).normal(size=(4, 3)))
        np.testing.assert_array_equal(out, 0.0)

    def test_closed_block_passes_input_through_skip(self):
        """Test that a block whose rectifier never fires leaves the skip path as the identity"""
        spec = ResidualMlpSpec(4, 4, hidden_width=4, n_blocks=1)
        params = init_params(spec, np.random.default_rng(31))
        params.view("input/w")[...] = np.eye(4)
        params.view("input/b")[...] = 0.0
        params.view("block0/ln_gain")[...] = 0.0
        params.view("block0/ln_offset")[...] = -1.0
        params.view("output/w")[...] = np.eye(4)
        params.view("output/b")[...] = 0.0
        x = np.random.default_rng(32).normal(size=(3, 4))
        out, _ = forward(spec, params, x)
        np.testing.assert_allclose(out, x, rtol=0.0, atol=1e-15)

    def test_matches_reference_implementation(self):
        """Test the vectorised pass against a unit-by-unit rewrite"""
        rng = np.random.default_rng(33)
        spec = ResidualMlpSpec(3, 5, hidden_width=7, n_blocks=3)
        params = init_params(spec, rng)
        params = params.with_values(params.values + rng.normal(scale=0.1, size=len(params)))
        x = rng.normal(size=(6, 3))
        out, _ = forward(spec, params, x)
        np.testing.assert_allclose(out, reference_forward(spec, params, x), rtol=1e-12, atol=1e-12)

    def test_forward_is_pure(self):
        """Test that repeated calls give bitwise-identical outputs and leave the parameters alone"""
        rng = np.random.default_rng(34)
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=2)
        params = init_params(spec, rng)
        before = params.values.copy()
        x = rng.normal(size=(5, 3))
        first, _ = forward(spec, params, x)
        second, _ = forward(spec, params, x)
        np.testing.assert_array_equal(first, second)
        np.testing.assert_array_equal(params.values, before)

    def test_zero_output_gradient(self):
        """Test that a zero output gradient gives a zero parameter gradient"""
        rng = np.random.default_rng(35)
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=2)
        params = init_params(spec, rng)
        _, tape = forward(spec, params, rng.normal(size=(5, 3)))
        np.testing.assert_array_equal(backward(spec, params, tape, np.zeros((5, 4))), 0.0)

    def test_linear_gradient_is_outer_product(self):
        """Test the linear layer gradient wrt its weights is outer(x, grad)"""
        rng = np.random.default_rng(36)
        x, w, g = rng.normal(size=3), rng.normal(size=(3, 2)), rng.normal(size=2)
        grad_x, grad_w, grad_b = linear_backward(x[None], w, g[None])
        np.testing.assert_allclose(grad_w, np.outer(x, g))
        np.testing.assert_allclose(grad_b, g)
        np.testing.assert_allclose(grad_x[0], w @ g)

    def test_output_gradient_shape_mismatch(self):
        """Test that a gradient not shaped like the output is rejected"""
        spec = ResidualMlpSpec(3, 4, hidden_width=8, n_blocks=1)
        params = init_params(spec, np.random.default_rng(37))
        _, tape = forward(spec, params, np.zeros((2, 3)))
        with pytest.raises(InternalError):
            backward(spec, params, tape, np.zeros((2, 5)))

class TestMixtureGaussian:
    """Mixture-of-Gaussians policy head"""

    def test_single_component_is_gaussian(self):
        """Test one component reduces to a Gaussian"""
        policy = MoGPolicy(np.zeros(1), np.array([[0.3]]), np.array([[np.log(0.5)]]))
        assert mog_log_prob(policy, np.array([1.0])) == pytest.approx(stats.norm.logpdf(1.0, 0.3, 0.5))

    def test_two_components(self):
        """Test two-component log density"""
        logits = np.log(np.array([0.25, 0.75]))
        policy = MoGPolicy(logits, np.array([[-1.0], [2.0]]), np.zeros((2, 1)))
        expected = np.log(0.25 * stats.norm.pdf(0.5, -1.0, 1.0) + 0.75 * stats.norm.pdf(0.5, 2.0, 1.0))
        assert mog_log_prob(policy, np.array([0.5])) == pytest.approx(expected)

    def test_standard_normal_and_collapsed_mixture(self):
        """Test the standard normal log density and that two identical components collapse to one"""
        single = MoGPolicy(np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1)))
        double = MoGPolicy(np.zeros(2), np.zeros((2, 1)), np.zeros((2, 1)))
        assert mog_log_prob(single, np.zeros(1)) == pytest.approx(-0.9189385332046727, abs=1e-12)
        assert mog_log_prob(double, np.zeros(1)) == pytest.approx(mog_log_prob(single, np.zeros(1)), abs=1e-12)

    def test_random_mixture_matches_direct_sum(self):
        """Test log-sum-exp evaluation against the plain weighted density sum"""
        rng = np.random.default_rng(40)
        logits, means = rng.normal(size=4), rng.normal(size=(4, 3))
        log_stds = rng.uniform(-0.5, 0.5, size=(4, 3))
        action = rng.normal(size=3)
        weights = np.exp(logits) / np.exp(logits).sum()
        density = sum(weights[k] * np.prod(stats.norm.pdf(action, means[k], np.exp(log_stds[k]))) for k in range(4))
        policy = MoGPolicy(logits, means, log_stds)
        assert abs(mog_log_prob(policy, action) - np.log(density)) < 1e-10

    def test_density_integrates_to_one(self):
        """Test that the 1-D mixture density integrates to one over [-10, 10]"""
        rng = np.random.default_rng(41)
        logits = rng.normal(size=5)
        means = rng.uniform(-3.0, 3.0, size=(5, 1))
        log_stds = rng.uniform(np.log(0.3), np.log(1.5), size=(5, 1))
        grid = np.linspace(-10.0, 10.0, 20001)
        n = len(grid)
        policy = MoGPolicy(np.tile(logits, (n, 1)), np.tile(means, (n, 1, 1)), np.tile(log_stds, (n, 1, 1)))
        density = np.exp(mog_log_prob(policy, grid[:, None]))
        assert abs(integrate.trapezoid(density, grid) - 1.0) < 1e-3

    def test_tiny_std_samples_are_component_means(self):
        """Test that with log-std -20 every sample sits on a component mean"""
        n = 200
        component_means = np.array([-2.0, 0.5, 3.0])
        policy = MoGPolicy(
            np.tile(np.log([0.2, 0.3, 0.5]), (n, 1)),
            np.tile(component_means[:, None], (n, 1, 1)),
            np.full((n, 3, 1), -20.0),
        )
        draws = mog_sample(policy, np.random.default_rng(42))
        gaps = np.min(np.abs(draws - component_means[None, :]), axis=1)
        assert np.all(gaps < 1e-8)
        assert len(np.unique(np.argmin(np.abs(draws - component_means[None, :]), axis=1))) == 3

    def test_fixed_seed_reproduces_samples(self):
        """Test that the same seed gives the same sample sequence"""
        rng = np.random.default_rng(43)
        policy = MoGPolicy(rng.normal(size=(6, 3)), rng.normal(size=(6, 3, 2)), rng.normal(scale=0.3, size=(6, 3, 2)))
        rng_a, rng_b = np.random.default_rng(7), np.random.default_rng(7)
        first = [mog_sample(policy, rng_a) for _ in range(3)]
        second = [mog_sample(policy, rng_b) for _ in range(3)]
        np.testing.assert_array_equal(np.array(first), np.array(second))
        assert not np.array_equal(first[0], mog_sample(policy, np.random.default_rng(8)))

    def test_far_action_stays_finite(self):
        """Test far-away actions give finite log densities"""
        policy = MoGPolicy(np.zeros(2), np.zeros((2, 1)), np.full((2, 1), -5.0))
        value = mog_log_prob(policy, np.array([50.0]))
        assert np.isfinite(value)

    def test_dimension_mismatch(self):
        """Test action dimension mismatch"""
        policy = MoGPolicy(np.zeros(1), np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(ValidationError):
            mog_log_prob(policy, np.zeros(3))

    def test_non_finite_action(self):
        """Test non-finite actions"""
        policy = MoGPolicy(np.zeros(1), np.zeros((1, 1)), np.zeros((1, 1)))
        with pytest.raises(NumericError):
            mog_log_prob(policy, np.array([np.inf]))

    def test_log_prob_gradient(self):
        """Test MoG log density gradient against central differences"""
        rng = np.random.default_rng(7)
        head = MixtureGaussianHead(action_dim=2, n_components=3)
        out = rng.normal(scale=0.5, size=(4, head.output_dim))
        actions = rng.normal(size=(4, 2))
        analytic = head.log_prob_grad(head.build(out), actions)
        numeric = numerical_gradient(lambda v: float(np.sum(head.log_prob(head.build(v.reshape(out.shape)), actions))), out.ravel())
        assert np.max(relative_error(analytic.ravel(), numeric, floor=1e-5)) < 1e-4

    def test_sample_moments(self):
        """Test sample mean and variance"""
        policy = MoGPolicy(np.zeros((1, 1)), np.array([[[1.5]]]), np.array([[[np.log(0.2)]]]))
        rng = np.random.default_rng(8)
        draws = np.array([mog_sample(policy, rng)[0, 0] for _ in range(4000)])
        assert abs(draws.mean() - 1.5) < 0.02
        assert abs(draws.std() - 0.2) < 0.02

    def test_component_frequencies(self):
        """Test component selection frequencies"""
        logits = np.log(np.array([[0.2, 0.8]]))
        policy = MoGPolicy(logits, np.array([[[-10.0], [10.0]]]), np.full((1, 2, 1), -8.0))
        rng = np.random.default_rng(9)
        draws = np.array([mog_sample(policy, rng)[0, 0] for _ in range(5000)])
        assert abs(np.mean(draws > 0) - 0.8) < 0.03

    def test_max_weight_mode(self):
        """Test max-weight deterministic action"""
        logits = np.array([[0.1, 2.0, -1.0]])
        means = np.array([[[0.0], [3.0], [-3.0]]])
        policy = MoGPolicy(logits, means, np.zeros((1, 3, 1)))
        np.testing.assert_array_equal(mog_deterministic(policy), [[3.0]])

    def test_max_weight_tie_takes_lowest_index(self):
        """Test ties go to the lowest component index"""
        policy = MoGPolicy(np.zeros((1, 2)), np.array([[[1.0], [2.0]]]), np.zeros((1, 2, 1)))
        np.testing.assert_array_equal(mog_deterministic(policy), [[1.0]])

    def test_sampled_component_mode(self):
        """Test sampled-component deterministic action"""
        policy = MoGPolicy(np.log(np.array([[0.5, 0.5]])), np.array([[[1.0], [2.0]]]), np.zeros((1, 2, 1)))
        action = mog_deterministic(policy, "sampled_component", np.random.default_rng(10))
        assert action[0, 0] in (1.0, 2.0)
        with pytest.raises(ConfigurationError):
            mog_deterministic(policy, "sampled_component")
        with pytest.raises(ConfigurationError):
            mog_deterministic(policy, "median")

    def test_build_clamps_log_std(self):
        """Test log-std clamping and its gradient mask"""
        head = MixtureGaussianHead(action_dim=1, n_components=1)
        policy = head.build(np.array([0.0, 0.0, 50.0]))
        assert policy.log_stds[0, 0, 0] == 4.0
        assert not policy.log_std_active[0, 0, 0]


class TestSoftmaxHead:
    """Categorical policy head for discrete actions"""

    def test_log_prob(self):
        """Test softmax log probability"""
        head = SoftmaxPolicyHead(3)
        policy = head.build(np.array([[0.0, np.log(2.0), np.log(3.0)]]))
        assert head.log_prob(policy, np.array([[2.0]]))[0] == pytest.approx(np.log(0.5))

    def test_log_prob_gradient(self):
        """Test softmax log probability gradient"""
        rng = np.random.default_rng(11)
        head = SoftmaxPolicyHead(4)
        logits = rng.normal(size=(3, 4))
        actions = np.array([[0.0], [3.0], [1.0]])
        analytic = head.log_prob_grad(head.build(logits), actions)
        numeric = numerical_gradient(lambda v: float(np.sum(head.log_prob(head.build(v.reshape(3, 4)), actions))), logits.ravel())
        assert np.max(relative_error(analytic.ravel(), numeric, floor=1e-5)) < 1e-4

    def test_out_of_range_action(self):
        """Test out-of-range actions"""
        head = SoftmaxPolicyHead(2)
        with pytest.raises(ValidationError):
            head.log_prob(head.build(np.zeros((1, 2))), np.array([[2.0]]))

    def test_deterministic_and_one_hot(self):
        """Test argmax action and one-hot encoding"""
        head = SoftmaxPolicyHead(3)
        policy = head.build(np.array([[0.0, 5.0, 1.0]]))
        np.testing.assert_array_equal(head.deterministic(policy), [[1.0]])
        np.testing.assert_array_equal(head.one_hot(np.array([[2.0]])), [[0.0, 0.0, 1.0]])

    def test_sample_frequencies(self):
        """Test softmax sample frequencies"""
        head = SoftmaxPolicyHead(2)
        policy = head.build(np.tile(np.log([0.3, 0.7]), (20000, 1)))
        draws = head.sample(policy, np.random.default_rng(12))
        assert draws.shape == (20000, 1)
        assert abs(draws.mean() - 0.7) < 0.02

    def test_needs_two_actions(self):
        """Test softmax head needs two actions"""
        with pytest.raises(ConfigurationError):
            SoftmaxPolicyHead(1)


class TestValueHead:
    """Categorical value head"""

    def test_mean_of_uniform_logits(self):
        """Test value mean and probabilities for uniform logits"""
        head = CategoricalValueHead(AtomGrid(5, 0.0, 4.0))
        assert head.mean(np.zeros(5)) == pytest.approx(2.0)
        np.testing.assert_allclose(head.probabilities(np.zeros((2, 5))).sum(axis=1), 1.0)


if __name__ == "__main__":
    pytest.main([__file__])
