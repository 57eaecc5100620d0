"""DSReLU with its dynamic slope schedule, and the baseline activations.

DSReLU passes non-positive inputs through unchanged and scales positive inputs
by s(t), a logistic interpolation from an initial slope `a` to a final slope
`b` over training progress t in [0, 1]:

    s(t) = a + (b - a) / (1 + exp(-k (t - 0.5)))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from .tensor import Tensor, apply_op


DEFAULT_A_DEG = 85.0
DEFAULT_B_DEG = 10.0
DEFAULT_K = 5.0
DEFAULT_LEAK = 0.01

# softplus switches to x + log1p(exp(-x)) above this input
SOFTPLUS_THRESHOLD = 20.0


@dataclass(frozen=True)
class SlopeSchedule:
    """Slope schedule parameters; `a` and `b` are slopes, not angles."""
    a: float = math.tan(math.radians(DEFAULT_A_DEG))
    b: float = math.tan(math.radians(DEFAULT_B_DEG))
    k: float = DEFAULT_K

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(
                f"slopes must be positive (first quadrant), got a={self.a}, b={self.b}"
            )
        if not self.k > 0:
            raise ValueError(f"steepness k must be positive, got {self.k}")

    @classmethod
    def from_degrees(
        cls,
        a_deg: float = DEFAULT_A_DEG,
        b_deg: float = DEFAULT_B_DEG,
        k: float = DEFAULT_K,
    ) -> "SlopeSchedule":
        """Build from slope angles in degrees, each strictly inside (0, 90)."""
        for name, angle in (("a_deg", a_deg), ("b_deg", b_deg)):
            if not 0 < angle < 90:
                raise ValueError(f"{name} must lie in (0, 90) degrees, got {angle}")
        return cls(a=math.tan(math.radians(a_deg)), b=math.tan(math.radians(b_deg)), k=float(k))

    def with_k(self, k: float) -> "SlopeSchedule":
        return SlopeSchedule(a=self.a, b=self.b, k=float(k))

    def slope(self, t: "TrainingProgress | float") -> float:
        return slope(self, t)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "k": self.k}

    @classmethod
    def from_dict(cls, data: dict) -> "SlopeSchedule":
        """Accepts {"a_deg", "b_deg", "k"}, {"a", "b", "k"} or any mix (slopes win over angles)."""
        k = float(data.get("k", DEFAULT_K))
        if "a" in data:
            a = float(data["a"])
        else:
            a = SlopeSchedule.from_degrees(a_deg=float(data.get("a_deg", DEFAULT_A_DEG))).a
        if "b" in data:
            b = float(data["b"])
        else:
            b = SlopeSchedule.from_degrees(b_deg=float(data.get("b_deg", DEFAULT_B_DEG))).b
        return cls(a=a, b=b, k=k)


@dataclass(frozen=True)
class TrainingProgress:
    """Fraction of planned training completed, clamped to [0, 1]."""
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "t", min(1.0, max(0.0, float(self.t))))

    @classmethod
    def at_epoch(cls, epoch: int, max_epochs: int) -> "TrainingProgress":
        """t = e / max(1, E - 1)."""
        return cls(epoch / max(1, max_epochs - 1))


def _as_t(t: "TrainingProgress | float") -> float:
    if isinstance(t, TrainingProgress):
        return t.t
    return TrainingProgress(t).t


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def slope(sched: SlopeSchedule, t: "TrainingProgress | float") -> float:
    """s(t) = a + (b - a) / (1 + exp(-k (t - 0.5)))."""
    return sched.a + (sched.b - sched.a) * _logistic(sched.k * (_as_t(t) - 0.5))


def slope_rate(sched: SlopeSchedule, t: "TrainingProgress | float") -> float:
    """ds/dt; its magnitude peaks at k |a - b| / 4 when t = 0.5."""
    sig = _logistic(sched.k * (_as_t(t) - 0.5))
    return (sched.b - sched.a) * sched.k * sig * (1.0 - sig)


def slope_curve(sched: SlopeSchedule, points: int = 101) -> list[tuple[float, float, float]]:
    """(t, s(t), ds/dt) on an even grid over [0, 1]."""
    grid = np.linspace(0.0, 1.0, points)
    return [(float(t), slope(sched, t), slope_rate(sched, t)) for t in grid]


class ActivationType(str, Enum):
    """Activation function families."""
    DSRELU = "dsrelu"
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    MISH = "mish"


@dataclass(frozen=True)
class ActivationKind:
    """An activation together with its parameters.

    `schedule` is only meaningful for DSReLU, `alpha` only for LeakyReLU.
    `name` overrides the default label used in report file names.
    """
    type: ActivationType
    schedule: Optional[SlopeSchedule] = None
    alpha: float = DEFAULT_LEAK
    name: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "type", ActivationType(self.type))
        if self.type is ActivationType.DSRELU and self.schedule is None:
            object.__setattr__(self, "schedule", SlopeSchedule())
        if self.type is ActivationType.LEAKY_RELU and not self.alpha > 0:
            raise ValueError(f"LeakyReLU alpha must be positive, got {self.alpha}")

    @classmethod
    def dsrelu(cls, schedule: Optional[SlopeSchedule] = None, name: Optional[str] = None):
        return cls(ActivationType.DSRELU, schedule=schedule or SlopeSchedule(), name=name)

    @classmethod
    def relu(cls):
        return cls(ActivationType.RELU)

    @classmethod
    def leaky_relu(cls, alpha: float = DEFAULT_LEAK):
        return cls(ActivationType.LEAKY_RELU, alpha=alpha)

    @classmethod
    def sigmoid(cls):
        return cls(ActivationType.SIGMOID)

    @classmethod
    def tanh(cls):
        return cls(ActivationType.TANH)

    @classmethod
    def mish(cls):
        return cls(ActivationType.MISH)

    @property
    def is_dsrelu(self) -> bool:
        return self.type is ActivationType.DSRELU

    @property
    def label(self) -> str:
        return self.name or self.type.value

    def to_dict(self) -> dict:
        data: dict[str, Any] = {"kind": self.type.value}
        if self.name:
            data["label"] = self.name
        if self.is_dsrelu:
            data.update(self.schedule.to_dict())
        if self.type is ActivationType.LEAKY_RELU:
            data["alpha"] = self.alpha
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ActivationKind":
        kind = ActivationType(data["kind"])
        schedule = SlopeSchedule.from_dict(data) if kind is ActivationType.DSRELU else None
        return cls(
            kind,
            schedule=schedule,
            alpha=float(data.get("alpha", DEFAULT_LEAK)),
            name=data.get("label"),
        )


BASELINES = (
    ActivationKind.relu(),
    ActivationKind.leaky_relu(),
    ActivationKind.sigmoid(),
    ActivationKind.tanh(),
    ActivationKind.mish(),
)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), switching to x + log(1 + e^-x) above the threshold."""
    out = np.empty_like(x, dtype=np.float64)
    high = x > SOFTPLUS_THRESHOLD
    out[high] = x[high] + np.log1p(np.exp(-x[high]))
    out[~high] = np.log1p(np.exp(x[~high]))
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward_values(kind: ActivationKind, x: np.ndarray, s: Optional[float] = None) -> np.ndarray:
    """Activation applied to a raw array. `s` is the DSReLU slope."""
    x = np.asarray(x, dtype=np.float64)
    kind_type = kind.type
    if kind_type is ActivationType.DSRELU:
        return np.where(x > 0, x * s, x)
    if kind_type is ActivationType.RELU:
        return np.maximum(x, 0.0)
    if kind_type is ActivationType.LEAKY_RELU:
        return np.where(x > 0, x, kind.alpha * x)
    if kind_type is ActivationType.SIGMOID:
        return _sigmoid(x)
    if kind_type is ActivationType.TANH:
        return np.tanh(x)
    return x * np.tanh(softplus(x))


def derivative_values(kind: ActivationKind, x: np.ndarray, s: Optional[float] = None) -> np.ndarray:
    """Exact derivative of the activation at each element of `x`.

    Kinks use the left branch: ReLU'(0) = 0, LeakyReLU'(0) = alpha, DSReLU'(0) = 1.
    """
    x = np.asarray(x, dtype=np.float64)
    kind_type = kind.type
    if kind_type is ActivationType.DSRELU:
        return np.where(x > 0, s, 1.0)
    if kind_type is ActivationType.RELU:
        return (x > 0).astype(np.float64)
    if kind_type is ActivationType.LEAKY_RELU:
        return np.where(x > 0, 1.0, kind.alpha)
    if kind_type is ActivationType.SIGMOID:
        sig = _sigmoid(x)
        return sig * (1.0 - sig)
    if kind_type is ActivationType.TANH:
        th = np.tanh(x)
        return 1.0 - th * th
    # d/dx x tanh(sp(x)) = tanh(sp) + x sech^2(sp) sigmoid(x)
    tsp = np.tanh(softplus(x))
    return tsp + x * (1.0 - tsp * tsp) * _sigmoid(x)


def activate(x: Tensor, kind: ActivationKind, s: Optional[float] = None) -> Tensor:
    """Differentiable activation op; DSReLU needs its current slope `s`."""
    if kind.is_dsrelu and s is None:
        raise ValueError("DSReLU needs the current slope")
    x_data = x.data
    out = forward_values(kind, x_data, s)
    return apply_op(
        kind.type.value,
        (x,),
        out,
        lambda g: (g * derivative_values(kind, x_data, s),),
    )


def dsrelu_forward(
    x: Tensor,
    sched: SlopeSchedule,
    t: "TrainingProgress | float",
) -> Tensor:
    """x * s(t) for x > 0, x otherwise."""
    return activate(x, ActivationKind.dsrelu(sched), slope(sched, t))


def dsrelu_backward(
    x: Tensor,
    sched: SlopeSchedule,
    t: "TrainingProgress | float",
) -> Tensor:
    """Elementwise derivative: s(t) for x > 0, 1 for x <= 0."""
    return Tensor._wrap(derivative_values(ActivationKind.dsrelu(sched), x.data, slope(sched, t)))


def baseline_forward(kind: ActivationKind, x: Tensor) -> Tensor:
    if kind.is_dsrelu:
        raise ValueError("DSReLU has a dedicated forward op (dsrelu_forward)")
    return activate(x, kind)


def activation_gradient(
    kind: ActivationKind,
    x: Tensor,
    sched: Optional[SlopeSchedule] = None,
    t: "TrainingProgress | float | None" = None,
) -> Tensor:
    """Elementwise derivative for any kind; DSReLU uses `sched` (or its own) at progress `t`."""
    if kind.is_dsrelu:
        if t is None:
            raise ValueError("DSReLU gradient needs the training progress t")
        return dsrelu_backward(x, sched or kind.schedule, t)
    return Tensor._wrap(derivative_values(kind, x.data))
