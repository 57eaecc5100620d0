"""Tests for Adam and the cross-entropy loss."""

import math

import numpy as np
import pytest

from src.errors import DomainError, NonFiniteError, ShapeError
from src.optim import Adam, AdamConfig, AdamState, adam_step, cross_entropy, log_softmax, softmax
from src import tensor as T
from src.tensor import Graph, Tensor


def reference_adam(p: float, grads: list[float], cfg: AdamConfig) -> float:
    """Scalar Adam written out the long way."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1 ** t)
        v_hat = v / (1 - cfg.beta2 ** t)
        p = p - cfg.alpha * m_hat / (math.sqrt(v_hat) + cfg.epsilon)
    return p


class TestAdamConfig:
    """Tests for AdamConfig validation."""

    def test_defaults(self):
        """Defaults are alpha 1e-4, betas 0.9/0.999, epsilon 1e-8."""
        cfg = AdamConfig()
        assert (cfg.alpha, cfg.beta1, cfg.beta2, cfg.epsilon) == (1e-4, 0.9, 0.999, 1e-8)

    @pytest.mark.parametrize("kwargs", [{"alpha": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}, {"epsilon": 0.0}])
    def test_invalid(self, kwargs):
        """Out-of-range hyperparameters are rejected."""
        with pytest.raises(ValueError):
            AdamConfig(**kwargs)

    def test_from_dict(self):
        """YAML strings such as '1e-3' are coerced to floats."""
        assert AdamConfig.from_dict({"alpha": "1e-3"}).alpha == 1e-3


class TestAdamStep:
    """Tests for adam_step."""

    def test_first_step_moves_by_alpha(self):
        """Bias correction makes the first step alpha in the gradient's sign."""
        p = Tensor(np.array([1.0, 1.0]))
        state = AdamState()
        adam_step([p], [np.array([0.5, -3.0])], state, AdamConfig())
        np.testing.assert_allclose(p.data, [1.0 - 1e-4, 1.0 + 1e-4], atol=1e-11)
        assert state.step == 1

    def test_zero_gradient(self):
        """A zero gradient leaves the parameter but advances the step counter."""
        p = Tensor(np.array([2.0]))
        state = AdamState()
        adam_step([p], [np.zeros(1)], state, AdamConfig())
        adam_step([p], [np.zeros(1)], state, AdamConfig())
        assert p.data[0] == 2.0
        assert state.step == 2

    def test_matches_scalar_reference(self):
        """1000 steps agree with the scalar recurrence to 1e-12."""
        cfg = AdamConfig(alpha=1e-3)
        grads = list(np.random.default_rng(0).normal(size=1000))
        p = Tensor(np.array([0.3]))
        state = AdamState()
        for g in grads:
            adam_step([p], [np.array([g])], state, cfg)
        assert p.data[0] == pytest.approx(reference_adam(0.3, grads, cfg), abs=1e-12)

    def test_non_finite_gradient(self):
        """NaN gradients name the parameter and leave everything untouched."""
        a, b = Tensor(np.ones(2)), Tensor(np.ones(3))
        state = AdamState()
        with pytest.raises(NonFiniteError, match="layers.1.bias"):
            adam_step([a, b], [np.ones(2), np.array([0.0, np.nan, 0.0])], state, AdamConfig(),
                      names=["layers.0.weight", "layers.1.bias"])
        np.testing.assert_array_equal(a.data, np.ones(2))
        assert state.step == 0

    def test_shape_mismatch(self):
        """A gradient of the wrong shape is rejected."""
        with pytest.raises(ShapeError):
            adam_step([Tensor(np.ones(2))], [np.ones(3)], AdamState(), AdamConfig())


class TestAdam:
    """Tests for the parameter-bound optimizer."""

    def test_missing_grad_counts_as_zero(self):
        """Parameters without gradients stay put."""
        a = Tensor(np.ones(2), requires_grad=True)
        b = Tensor(np.ones(2), requires_grad=True)
        opt = Adam([("a", a), ("b", b)])
        with Graph() as graph:
            graph.backward(T.sum(a))
        opt.step()
        np.testing.assert_allclose(a.data, 1.0 - 1e-4, atol=1e-11)
        np.testing.assert_array_equal(b.data, np.ones(2))

    def test_zero_grad(self):
        """zero_grad clears all gradients."""
        a = Tensor(np.ones(2), requires_grad=True)
        opt = Adam([("a", a)])
        with Graph() as graph:
            graph.backward(T.sum(a))
        opt.zero_grad()
        assert a.grad is None


class TestCrossEntropy:
    """Tests for softmax cross-entropy."""

    def test_uniform_logits(self):
        """Equal logits over 4 classes give ln 4."""
        loss = cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 3])
        assert loss.item() == pytest.approx(1.386294, abs=1e-6)

    def test_large_logits_are_stable(self):
        """A confident correct prediction gives a finite loss near zero."""
        loss = cross_entropy(Tensor(np.array([[1000.0, 0.0]])), [0])
        assert np.isfinite(loss.item())
        assert loss.item() == pytest.approx(0.0, abs=1e-12)
        assert cross_entropy(Tensor(np.array([[1000.0, 0.0]])), [1]).item() == pytest.approx(1000.0)

    def test_naive_oracle(self):
        """Matches -mean(log(exp(z_y) / sum(exp(z)))) on moderate logits."""
        rng = np.random.default_rng(1)
        z = rng.normal(size=(5, 7))
        y = rng.integers(0, 7, size=5)
        naive = -np.mean(np.log(np.exp(z[np.arange(5), y]) / np.exp(z).sum(axis=1)))
        assert cross_entropy(Tensor(z), y).item() == pytest.approx(naive, abs=1e-12)

    def test_gradient_rows_sum_to_zero(self):
        """(softmax - onehot) / N rows sum to zero."""
        z = Tensor(np.random.default_rng(2).normal(size=(6, 4)), requires_grad=True)
        with Graph() as graph:
            graph.backward(cross_entropy(z, [0, 1, 2, 3, 0, 1]))
        np.testing.assert_allclose(z.grad.sum(axis=1), 0.0, atol=1e-15)
        expected = softmax(z.data)
        expected[np.arange(6), [0, 1, 2, 3, 0, 1]] -= 1.0
        np.testing.assert_allclose(z.grad, expected / 6, atol=1e-15)

    def test_label_out_of_range(self):
        """Labels outside [0, C) are a domain error."""
        with pytest.raises(DomainError, match="label 4"):
            cross_entropy(Tensor(np.zeros((2, 4))), [1, 4])

    def test_label_count_mismatch(self):
        """One label per row."""
        with pytest.raises(ShapeError):
            cross_entropy(Tensor(np.zeros((2, 4))), [1])

    def test_log_softmax_rows(self):
        """exp(log_softmax) rows sum to one."""
        rows = np.exp(log_softmax(np.array([[1.0, 2.0, 3.0], [-500.0, 0.0, 500.0]]))).sum(axis=1)
        np.testing.assert_allclose(rows, 1.0)
