"""Tests for the finite-difference checking helpers."""

import numpy as np
import pytest

from src import tensor as T
from src.gradcheck import (
    KINK_MARGIN,
    GradCheckResult,
    activation_suite,
    away_from_zero,
    check_gradient,
    layer_suite,
    numerical_gradient,
    relative_error,
)
from src.tensor import Tensor, apply_op


class TestHelpers:
    """Tests for the numeric building blocks."""

    def test_numerical_gradient_of_quadratic(self):
        """Central differences are exact for quadratics up to rounding."""
        x = np.array([1.0, -2.0, 0.5])
        grad = numerical_gradient(lambda v: float(np.sum(v ** 2)), x)
        np.testing.assert_allclose(grad, 2 * x, atol=1e-8)
        np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])

    def test_selected_indices(self):
        """Only the requested coordinates are differenced."""
        grad = numerical_gradient(lambda v: float(np.sum(v ** 2)), np.ones((2, 2)), indices=[(1, 0)])
        assert grad[1, 0] == pytest.approx(2.0, abs=1e-8)
        assert grad[0, 0] == 0.0

    def test_relative_error_floor(self):
        """Small gradients are compared absolutely."""
        np.testing.assert_allclose(relative_error(np.array([1e-3, 100.0]), np.array([2e-3, 101.0])), [1e-3, 1e-2])

    def test_away_from_zero(self):
        """Samples keep their distance from the kink."""
        x = away_from_zero(np.random.default_rng(0), (10000,))
        assert np.abs(x).min() >= KINK_MARGIN
        assert x.min() >= -2.0 and x.max() <= 2.0

    def test_result_dict(self):
        """Results report pass/fail against their tolerance."""
        result = GradCheckResult("op/x", 2e-4, 10, 1e-4)
        assert not result.passed
        assert result.to_dict()["passed"] is False


class TestCheckGradient:
    """Tests for check_gradient."""

    def test_detects_wrong_backward(self):
        """A deliberately wrong derivative fails the check."""
        def bad_square(x):
            return apply_op("bad_square", (x,), x.data ** 2, lambda g: (g * x.data,))

        result = check_gradient("bad_square", bad_square, [np.array([0.5, 1.0, 1.5])])
        assert not result.passed

    def test_counts_points(self):
        """Every input coordinate is checked."""
        result = check_gradient("mul", T.mul, [np.ones((2, 3)), np.ones((2, 3))])
        assert result.points == 12
        assert result.passed


class TestSuites:
    """Tests for the bundled suites."""

    def test_activations(self):
        """All six activations match their finite differences to 1e-6."""
        results = activation_suite()
        assert len(results) == 6
        for result in results:
            assert result.passed, result
            assert result.points == 100

    def test_layers(self):
        """Every op and the loss pass."""
        results = layer_suite()
        assert {r.name for r in results} >= {"op/conv2d", "op/matmul", "op/cross_entropy", "op/global_avg_pool"}
        for result in results:
            assert result.passed, result

    @pytest.mark.parametrize("seed", [1, 2])
    def test_other_seeds(self, seed):
        """The suites do not depend on a lucky seed."""
        for result in activation_suite(seed=seed) + layer_suite(seed=seed):
            assert result.passed, result
