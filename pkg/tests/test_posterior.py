import math

import numpy as np
import pytest
from scipy.special import logit

from ardbnn.data import Dataset
from ardbnn.exceptions import EmptyInputError, InputShapeError
from ardbnn.network import NetworkShape, forward_probability, unflatten
from ardbnn.posterior import (PROB_CLAMP, ArdGrouping, BnnPosterior, Hyperparameters,
                              data_error, default_ard_grouping, grad_neg_log_posterior,
                              neg_log_posterior, single_class_grouping, weight_error_per_class)

from conftest import random_problem


def _cross_entropy_oracle(shape, w, data):
    """Per-sample loop with clamped probabilities."""
    params = unflatten(shape, w)
    total = 0.0
    for x, t in zip(data.features, data.labels):
        y = min(max(forward_probability(params, x), PROB_CLAMP), 1 - PROB_CLAMP)
        total -= t * math.log(y) + (1 - t) * math.log(1 - y)
    return total


def central_differences(f, w, rel=1e-5):
    g = np.empty_like(w)
    for i in range(w.size):
        h = rel * max(1.0, abs(w[i]))
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


class TestGrouping:
    def test_default_credit_grouping(self):
        shape = NetworkShape(23, 5)
        g = default_ard_grouping(shape, [f"X{i}" for i in range(1, 24)])
        assert g.n_classes == 26
        assert g.sizes[:23].tolist() == [5] * 23
        assert g.sizes[23:].tolist() == [5, 5, 1]
        assert g.class_labels[-3:] == ("hidden_biases", "output_weights", "output_bias")
        assert g.is_ard and g.n_input_classes == 23

    def test_input_class_holds_fan_out_weights(self):
        shape = NetworkShape(3, 2)
        g = default_ard_grouping(shape, ["a", "b", "c"])
        np.testing.assert_array_equal(g.members(1), [2, 3])

    def test_smallest_network(self):
        g = default_ard_grouping(NetworkShape(1, 1), ["x"])
        assert g.sizes.tolist() == [1, 1, 1, 1]

    def test_single_class(self):
        g = single_class_grouping(NetworkShape(4, 3))
        assert g.n_classes == 1 and not g.is_ard
        assert g.sizes.tolist() == [NetworkShape(4, 3).n_params]

    def test_name_count_mismatch(self):
        with pytest.raises(InputShapeError):
            default_ard_grouping(NetworkShape(3, 2), ["a", "b"])

    def test_empty_class_rejected(self):
        with pytest.raises(InputShapeError):
            ArdGrouping(np.array([0, 0, 2]), ("a", "b", "c"))


class TestHyperparameters:
    @pytest.mark.parametrize("alpha", [[0.0, 1.0], [-1.0], [np.inf]])
    def test_alpha_must_be_positive_and_finite(self, alpha):
        with pytest.raises(ValueError):
            Hyperparameters(np.array(alpha))


class TestDataError:
    def test_zero_network(self):
        shape = NetworkShape(2, 3)
        data = Dataset(np.arange(10.0).reshape(5, 2), [0, 1, 1, 0, 1])
        assert data_error(np.zeros(shape.n_params), data) == pytest.approx(5 * math.log(2))

    def test_clamp_boundary(self):
        # output bias -1000 pushes y to 0; with t=1 the clamp gives -ln(1e-12)
        shape = NetworkShape(1, 1)
        data = Dataset([[0.0]], [1])
        w = np.array([0.0, 0.0, 0.0, -1000.0])
        assert data_error(w, data) == pytest.approx(-math.log(1e-12), rel=1e-12)
        assert shape.n_params == w.size

    def test_matches_per_sample_oracle(self, rng):
        shape, w, data, _, _ = random_problem(rng, n_in=3, n_hidden=4, n_rows=10)
        assert data_error(unflatten(shape, w), data) == pytest.approx(
            _cross_entropy_oracle(shape, w, data), rel=1e-13)

    def test_row_permutation_invariance(self, rng):
        shape, w, data, _, _ = random_problem(rng, n_rows=15)
        perm = rng.permutation(data.n_rows)
        assert data_error(w, data) == pytest.approx(data_error(w, data.take(perm)), rel=1e-13)

    def test_finite_for_huge_weights(self, rng):
        shape, w, data, _, _ = random_problem(rng)
        assert np.isfinite(data_error(w * 1e8, data))

    def test_empty_dataset(self):
        with pytest.raises(EmptyInputError):
            data_error(np.zeros(4), Dataset(np.empty((0, 1)), []))


class TestWeightError:
    def test_hand_arithmetic(self):
        g = ArdGrouping(np.zeros(2, dtype=int), ("all",))
        assert weight_error_per_class(np.array([3.0, 4.0]), g).tolist() == [12.5]

    def test_zero_parameters(self):
        g = default_ard_grouping(NetworkShape(3, 2), ["a", "b", "c"])
        assert not np.any(weight_error_per_class(np.zeros(g.n_params), g))

    def test_within_class_permutation(self, rng):
        g = default_ard_grouping(NetworkShape(3, 4), ["a", "b", "c"])
        w = rng.standard_normal(g.n_params)
        members = g.members(1)
        v = w.copy()
        v[members] = w[members[::-1]]
        np.testing.assert_allclose(weight_error_per_class(v, g), weight_error_per_class(w, g))

    def test_shape_mismatch(self):
        g = single_class_grouping(NetworkShape(2, 2))
        with pytest.raises(InputShapeError):
            weight_error_per_class(np.zeros(3), g)


class TestNegLogPosterior:
    def test_zero_network_two_points(self):
        shape = NetworkShape(2, 2)
        g = default_ard_grouping(shape, ["a", "b"])
        data = Dataset([[1.0, 2.0], [3.0, -1.0]], [0, 1])
        out = neg_log_posterior(np.zeros(shape.n_params), data, g,
                                Hyperparameters(np.ones(g.n_classes)))
        assert out.total == pytest.approx(2 * math.log(2))

    def test_linear_in_alpha(self, rng):
        shape, w, data, g, alpha = random_problem(rng)
        one = neg_log_posterior(w, data, g, Hyperparameters(alpha))
        two = neg_log_posterior(w, data, g, Hyperparameters(2 * alpha))
        assert two.total - two.e_data == pytest.approx(2 * (one.total - one.e_data), rel=1e-12)

    def test_decomposition_and_oracle(self, rng):
        for _ in range(10):
            shape, w, data, g, alpha = random_problem(rng)
            beta = rng.uniform(0.2, 2.0)
            out = neg_log_posterior(w, data, g, Hyperparameters(alpha, beta))
            recombined = beta * out.e_data + float(np.dot(alpha, out.e_weight_per_class))
            assert out.total == pytest.approx(recombined, rel=1e-14)
            prior = sum(alpha[g.class_of[i]] * 0.5 * w[i] ** 2 for i in range(w.size))
            oracle = beta * _cross_entropy_oracle(shape, w, data) + prior
            assert out.total == pytest.approx(oracle, rel=1e-12)


class TestGradient:
    def test_balanced_labels_zero_output_bias_gradient(self):
        shape = NetworkShape(2, 3)
        data = Dataset([[1.0, 2.0], [1.0, 2.0]], [0, 1])
        g = single_class_grouping(shape)
        grad = grad_neg_log_posterior(np.zeros(shape.n_params), data, g, Hyperparameters([1.0]))
        assert grad[-1] == 0.0

    def test_prior_only(self):
        shape = NetworkShape(1, 1)
        g = single_class_grouping(shape)
        data = Dataset([[0.3]], [1])
        w = np.array([3.0, 4.0, 0.0, 0.0])
        grad = grad_neg_log_posterior(w, data, g, Hyperparameters([2.0], beta=0.0))
        np.testing.assert_array_equal(grad, [6.0, 8.0, 0.0, 0.0])

    def test_matches_finite_differences(self, rng):
        for _ in range(20):
            shape, w, data, g, alpha = random_problem(rng)
            post = BnnPosterior(shape, data.features, data.labels, g)
            analytic = post.gradient(w, alpha)
            numeric = central_differences(lambda v: post.energy(v, alpha), w)
            rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
            assert rel.max() < 1e-5

    def test_logit_jacobian_matches_finite_differences(self, rng):
        shape, w, data, g, _ = random_problem(rng, n_in=3, n_hidden=2, n_rows=4)
        post = BnnPosterior(shape, data.features, data.labels, g)
        J = post.logit_jacobian(w)
        for n in range(data.n_rows):
            num = central_differences(lambda v: logit(post.probabilities(v)[n]), w)
            np.testing.assert_allclose(J[n], num, atol=1e-7)
