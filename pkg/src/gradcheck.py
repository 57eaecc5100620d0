"""Central finite-difference checks for ops, activations and whole networks.

Shared by the test suite and the `gradcheck` command. The error of one
coordinate is |analytic - numeric| / max(1, |analytic|).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .activations import BASELINES, ActivationKind, activate, slope
from .network import Network, build, residual_spec
from .optim import cross_entropy
from .tensor import Graph, Mode, Tensor


logger = logging.getLogger(__name__)

STEP = 1e-6
TOLERANCE = 1e-4
ACTIVATION_TOLERANCE = 1e-6
# keep sample points this far from activation kinks
KINK_MARGIN = 1e-3

TensorFn = Callable[..., Tensor]


@dataclass
class GradCheckResult:
    name: str
    max_error: float
    points: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_error": self.max_error,
            "points": self.points,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def numerical_gradient(
    fn: Callable[[np.ndarray], float],
    x: np.ndarray,
    h: float = STEP,
    indices: Optional[Sequence[tuple[int, ...]]] = None,
) -> np.ndarray:
    """Central differences of a scalar function, at all (or the given) coordinates of `x`."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    coords = indices if indices is not None else list(np.ndindex(x.shape))
    for idx in coords:
        original = x[idx]
        x[idx] = original + h
        upper = fn(x)
        x[idx] = original - h
        lower = fn(x)
        x[idx] = original
        grad[idx] = (upper - lower) / (2.0 * h)
    return grad


def _projection(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.5, 1.5, size=shape)


def check_gradient(
    name: str,
    fn: TensorFn,
    inputs: Sequence[np.ndarray],
    h: float = STEP,
    tolerance: float = TOLERANCE,
    seed: int = 0,
) -> GradCheckResult:
    """Compare backprop against central differences for every input of `fn`.

    The output is reduced to a scalar through a fixed random projection so every
    output element contributes.
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    with T.no_grad():
        out_shape = fn(*[Tensor(x) for x in arrays]).shape
    weights = _projection(out_shape, np.random.default_rng(seed))

    leaves = [Tensor(x, requires_grad=True) for x in arrays]
    with Graph() as graph:
        loss = T.sum(T.mul(fn(*leaves), Tensor(weights)))
        graph.backward(loss)

    max_error = 0.0
    points = 0
    for position, leaf in enumerate(leaves):
        def scalar(values: np.ndarray, position=position) -> float:
            args = [Tensor(values) if i == position else Tensor(x) for i, x in enumerate(arrays)]
            with T.no_grad():
                return float(np.sum(fn(*args).data * weights))

        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(arrays[position])
        numeric = numerical_gradient(scalar, arrays[position], h)
        max_error = max(max_error, float(np.max(relative_error(analytic, numeric))))
        points += analytic.size

    return GradCheckResult(name, max_error, points, tolerance)


def away_from_zero(rng: np.random.Generator, shape: tuple[int, ...], low: float = -2.0, high: float = 2.0) -> np.ndarray:
    """Uniform samples in [low, high] with |x| >= KINK_MARGIN."""
    x = rng.uniform(low, high, size=shape)
    return np.where(np.abs(x) < KINK_MARGIN, KINK_MARGIN, x)


def all_activations() -> list[ActivationKind]:
    return [ActivationKind.dsrelu(), *BASELINES]


def activation_suite(points: int = 100, seed: int = 0, t: float = 0.3) -> list[GradCheckResult]:
    """Every activation on `points` random non-zero inputs in [-2, 2]."""
    rng = np.random.default_rng(seed)
    x = away_from_zero(rng, (points,))
    results = []
    for kind in all_activations():
        s = slope(kind.schedule, t) if kind.is_dsrelu else None
        results.append(check_gradient(
            f"activation/{kind.label}",
            lambda v, kind=kind, s=s: activate(v, kind, s),
            [x],
            tolerance=ACTIVATION_TOLERANCE,
            seed=seed,
        ))
    return results


def layer_suite(seed: int = 0) -> list[GradCheckResult]:
    """Tensor ops and loss; each case draws about 100 random points in [-2, 2]."""
    rng = np.random.default_rng(seed)

    def u(*shape: int) -> np.ndarray:
        return rng.uniform(-2.0, 2.0, size=shape)

    labels = rng.integers(0, 5, size=20)
    a, b = u(10, 10), u(10, 10)
    # maximum is kinked on ties
    b_apart = a + np.where(rng.random((10, 10)) < 0.5, -1.0, 1.0) * rng.uniform(0.1, 1.0, (10, 10))

    cases: list[tuple[str, TensorFn, list[np.ndarray]]] = [
        ("add", T.add, [a, b]),
        ("sub", T.sub, [a, b]),
        ("mul", T.mul, [a, b]),
        ("scale", lambda x: T.scale(x, -1.5), [a]),
        ("exp", T.exp, [a]),
        ("log", T.log, [rng.uniform(0.5, 2.0, (10, 10))]),
        ("tanh", T.tanh, [a]),
        ("maximum", T.maximum, [a, b_apart]),
        ("sum", lambda x: T.sum(x, axis=1), [a]),
        ("mean", lambda x: T.mean(x, axis=0), [a]),
        ("max_over_axis", lambda x: T.max_over_axis(x, axis=1), [a]),
        ("matmul", T.matmul, [u(10, 10), u(10, 10)]),
        ("transpose", T.transpose, [u(10, 10)]),
        ("reshape", lambda x: T.reshape(x, (4, 25)), [u(10, 10)]),
        ("flatten", T.flatten, [u(4, 5, 5)]),
        ("add_bias", T.add_bias, [u(20, 5), u(5)]),
        ("global_avg_pool", T.global_avg_pool, [u(2, 2, 5, 5)]),
        ("conv2d", lambda x, k: T.conv2d(x, k, 1, 1), [u(2, 2, 5, 5), u(3, 2, 3, 3)]),
        ("conv2d_stride2", lambda x, k: T.conv2d(x, k, 2, 1, allow_truncation=True), [u(2, 2, 6, 6), u(3, 2, 3, 3)]),
        ("conv2d_1xk", lambda x, k: T.conv2d(x, k, 1, (0, 1)), [u(2, 1, 1, 50), u(2, 1, 1, 3)]),
        ("cross_entropy", lambda z: cross_entropy(z, labels), [u(20, 5)]),
    ]
    return [check_gradient(f"op/{name}", fn, inputs, seed=seed) for name, fn, inputs in cases]


def network_gradient_check(
    net: Network,
    x: np.ndarray,
    labels: np.ndarray,
    points: int = 100,
    seed: int = 0,
    h: float = STEP,
    tolerance: float = TOLERANCE,
    name: Optional[str] = None,
) -> GradCheckResult:
    """Backprop of CE(forward(x)) against central differences at random parameter coordinates."""
    net.zero_grad()
    with Graph() as graph:
        graph.backward(cross_entropy(net.forward(x, Mode.TRAINING), labels))

    rng = np.random.default_rng(seed)
    named = net.named_parameters()
    sizes = np.array([tensor.size for _, tensor in named])
    flat = rng.choice(int(sizes.sum()), size=min(points, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    max_error = 0.0
    for position in flat:
        owner = int(np.searchsorted(offsets, position, side="right") - 1)
        _, tensor = named[owner]
        idx = np.unravel_index(position - offsets[owner], tensor.shape)
        original = tensor.data[idx]

        def loss_at(value: float) -> float:
            tensor.data[idx] = value
            return cross_entropy(net.forward(x, Mode.INFERENCE), labels).item()

        numeric = (loss_at(original + h) - loss_at(original - h)) / (2.0 * h)
        tensor.data[idx] = original
        analytic = tensor.grad[idx] if tensor.grad is not None else 0.0
        max_error = max(max_error, float(relative_error(analytic, numeric)))

    net.zero_grad()
    return GradCheckResult(name or f"network/{net.spec.activation.label}", max_error, len(flat), tolerance)


def toy_residual_network(activation: ActivationKind, seed: int = 0) -> Network:
    """Two-stage residual net on 2×6×6 inputs, about 1.3k parameters."""
    return build(residual_spec((2, 6, 6), 3, activation, stages=(1, 1), base_filters=4, seed=seed))


def network_suite(points: int = 100, seed: int = 0, t: float = 0.3) -> list[GradCheckResult]:
    """End-to-end check of the toy residual network for every activation."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=(4, 2, 6, 6))
    labels = rng.integers(0, 3, size=4)
    results = []
    for kind in all_activations():
        net = toy_residual_network(kind, seed)
        net.set_progress(t)
        results.append(network_gradient_check(net, x, labels, points, seed))
    return results


def run_all(seed: int = 0) -> list[GradCheckResult]:
    results = activation_suite(seed=seed) + layer_suite(seed=seed) + network_suite(seed=seed)
    for result in results:
        log = logger.info if result.passed else logger.warning
        log("%s: max error %.3e over %d points", result.name, result.max_error, result.points)
    return results


__all__ = [
    "GradCheckResult",
    "activation_suite",
    "check_gradient",
    "layer_suite",
    "network_gradient_check",
    "network_suite",
    "numerical_gradient",
    "relative_error",
    "run_all",
    "toy_residual_network",
]
