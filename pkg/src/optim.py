"""Adam optimizer and softmax cross-entropy loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, NonFiniteError, ShapeError
from .tensor import Tensor, apply_op


@dataclass(frozen=True)
class AdamConfig:
    alpha: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def from_dict(cls, data: dict) -> "AdamConfig":
        return cls(**{key: float(value) for key, value in data.items()})

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}


@dataclass
class AdamState:
    """Moment estimates, one array per parameter, created lazily on the first step."""
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    cfg: AdamConfig,
    names: Sequence[str] = (),
) -> None:
    """One Adam update, in place: p <- p - alpha * m_hat / (sqrt(v_hat) + eps).

    Every gradient is checked before any parameter changes, so a non-finite
    gradient leaves the parameters and the state untouched.
    """
    if len(params) != len(grads):
        raise ShapeError(f"adam_step: {len(params)} parameters but {len(grads)} gradients")
    for index, (param, grad) in enumerate(zip(params, grads)):
        name = names[index] if index < len(names) else (param.name or f"param[{index}]")
        if grad.shape != param.data.shape:
            raise ShapeError(f"adam_step: gradient of {name} has shape {grad.shape}, expected {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"adam_step: non-finite gradient for {name}")

    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]

    state.step += 1
    correction1 = 1.0 - cfg.beta1 ** state.step
    correction2 = 1.0 - cfg.beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (grad * grad)
        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


class Adam:
    """Adam bound to a fixed list of named parameters."""

    def __init__(self, named_params: Sequence[tuple[str, Tensor]], cfg: AdamConfig = AdamConfig()):
        self.names = [name for name, _ in named_params]
        self.params = [tensor for _, tensor in named_params]
        self.cfg = cfg
        self.state = AdamState()

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        grads = [
            param.grad if param.grad is not None else np.zeros_like(param.data)
            for param in self.params
        ]
        adam_step(self.params, grads, self.state, self.cfg, self.names)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax via log-sum-exp with max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise DomainError(f"label {bad} out of range [0, {num_classes})")
    return labels.astype(np.int64)


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Batch-mean of -log softmax(logits)[label]; gradient (softmax - onehot) / N."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be N×C, got {logits.shape}")
    n, c = logits.shape
    labels = _check_labels(labels, c)
    if labels.shape[0] != n:
        raise ShapeError(f"cross_entropy: {n} rows but {labels.shape[0]} labels")

    log_probs = log_softmax(logits.data)
    rows = np.arange(n)
    loss = -log_probs[rows, labels].mean()

    def backward_fn(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (grad * (float(g) / n),)

    return apply_op("cross_entropy", (logits,), np.array(loss), backward_fn)
