"""Dense float64 tensors with a reverse-mode differentiation tape.

Every operation computes its result with numpy, checks it is finite and, when a
training-mode `Graph` is active and at least one input is tracked, appends a node
holding the backward rule. The tape is rebuilt on every forward pass:

    with Graph() as graph:
        loss = cross_entropy(net.forward(x), labels)
        graph.backward(loss)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, GraphError, NonFiniteError, ShapeError


IntPair = Union[int, tuple[int, int], list[int]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Mode(str, Enum):
    """Graph recording mode."""
    TRAINING = "training"
    INFERENCE = "inference"


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{what} produced non-finite values")


class Tensor:
    """N-dimensional float64 array that can take part in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "graph", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        values = np.array(data, dtype=np.float64)
        _check_finite(values, name or "tensor")
        self.data = values
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.graph: Optional[Graph] = None
        self.name = name

    @classmethod
    def _wrap(cls, values: np.ndarray) -> "Tensor":
        """Wrap an already-checked array without copying."""
        tensor = cls.__new__(cls)
        tensor.data = values
        tensor.grad = None
        tensor.requires_grad = False
        tensor.node_id = None
        tensor.graph = None
        tensor.name = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        """Copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class Node:
    """One recorded operation."""
    node_id: int
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


_GRAPH_STACK: list["Graph"] = []


class Graph:
    """Append-only tape of operations, active inside a `with` block."""

    def __init__(self, mode: Mode = Mode.TRAINING):
        self.mode = Mode(mode)
        self.nodes: list[Node] = []

    def __enter__(self) -> "Graph":
        _GRAPH_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _GRAPH_STACK.pop()

    def tracks(self, tensor: Tensor) -> bool:
        """Whether gradients flow into `tensor` through this graph."""
        if tensor.node_id is not None:
            return tensor.graph is self
        return tensor.requires_grad

    def record(
        self,
        op: str,
        inputs: tuple[Tensor, ...],
        output: Tensor,
        backward_fn: BackwardFn,
    ) -> None:
        node_id = len(self.nodes)
        self.nodes.append(Node(node_id, op, inputs, output, backward_fn))
        output.node_id = node_id
        output.graph = self
        output.requires_grad = True

    def backward(self, loss: Tensor) -> None:
        """Populate `.grad` of every leaf reachable from `loss`.

        Leaf gradients accumulate additively, both across shared uses within one
        pass and across repeated calls until `zero_grad`.
        """
        if self.mode is not Mode.TRAINING:
            raise GraphError("backward() called on an inference-mode graph")
        if loss.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss.graph is not self or loss.node_id is None:
            raise GraphError("loss was not recorded on this graph")

        pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        for node in reversed(self.nodes[: loss.node_id + 1]):
            grad = pending.pop(node.node_id, None)
            if grad is None:
                continue
            for tensor, input_grad in zip(node.inputs, node.backward_fn(grad)):
                if input_grad is None or not self.tracks(tensor):
                    continue
                if tensor.node_id is not None:
                    if tensor.node_id in pending:
                        pending[tensor.node_id] = pending[tensor.node_id] + input_grad
                    else:
                        pending[tensor.node_id] = input_grad
                elif tensor.grad is None:
                    tensor.grad = np.array(input_grad, dtype=np.float64)
                else:
                    tensor.grad = tensor.grad + input_grad


def active_graph() -> Optional[Graph]:
    return _GRAPH_STACK[-1] if _GRAPH_STACK else None


def no_grad() -> Graph:
    """Context in which nothing is recorded."""
    return Graph(Mode.INFERENCE)


def backward(loss: Tensor) -> None:
    """Run the backward pass of the graph `loss` was recorded on."""
    graph = active_graph()
    if graph is not None and graph.mode is Mode.INFERENCE:
        raise GraphError("backward() called in inference mode")
    if loss.graph is None:
        raise GraphError("loss is not attached to a training graph")
    loss.graph.backward(loss)


def apply_op(
    op: str,
    inputs: tuple[Tensor, ...],
    values: np.ndarray,
    backward_fn: BackwardFn,
) -> Tensor:
    """Wrap `values` as the result of `op` and record it when a graph is listening."""
    _check_finite(values, op)
    result = Tensor._wrap(values)
    graph = active_graph()
    if graph is not None and graph.mode is Mode.TRAINING:
        if any(graph.tracks(t) for t in inputs):
            graph.record(op, inputs, result, backward_fn)
    return result


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _pair(value: IntPair, what: str) -> tuple[int, int]:
    if isinstance(value, int):
        return value, value
    pair = tuple(int(v) for v in value)
    if len(pair) != 2:
        raise ShapeError(f"{what} must be an int or a pair, got {value!r}")
    return pair


def _check_axis(op: str, t: Tensor, axis: Optional[int]) -> None:
    if axis is not None and not 0 <= axis < t.ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for rank {t.ndim}")


# Elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return apply_op("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return apply_op("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return apply_op("mul", (a, b), a_data * b_data, lambda g: (g * b_data, g * a_data))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return apply_op("scale", (a,), factor * a.data, lambda g: (factor * g,))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return apply_op("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log: input has non-positive values")
    a_data = a.data
    return apply_op("log", (a,), np.log(a_data), lambda g: (g / a_data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return apply_op("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to `a`."""
    _same_shape("maximum", a, b)
    take_a = a.data >= b.data
    return apply_op(
        "maximum",
        (a, b),
        np.where(take_a, a.data, b.data),
        lambda g: (g * take_a, g * ~take_a),
    )


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "exp": exp,
    "log": log,
    "tanh_fn": tanh,
    "tanh": tanh,
    "maximum": maximum,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise operation by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"Unknown elementwise op: {op}") from None
    return fn(*args)


# Reductions


def sum(t: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    _check_axis("sum", t, axis)
    shape = t.data.shape

    def backward_fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return apply_op("sum", (t,), np.sum(t.data, axis=axis), backward_fn)


def mean(t: Tensor, axis: Optional[int] = None) -> Tensor:
    _check_axis("mean", t, axis)
    shape = t.data.shape
    count = t.size if axis is None else shape[axis]

    def backward_fn(g):
        if axis is None:
            return (np.full(shape, float(g) / count),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, shape).copy(),)

    return apply_op("mean", (t,), np.mean(t.data, axis=axis), backward_fn)


def max_over_axis(t: Tensor, axis: Optional[int] = None) -> Tensor:
    """Maximum along `axis` (whole tensor when None); gradient goes to the first argmax."""
    _check_axis("max", t, axis)
    shape = t.data.shape
    if axis is None:
        flat_index = int(np.argmax(t.data))

        def backward_fn(g):
            grad = np.zeros(t.size)
            grad[flat_index] = float(g)
            return (grad.reshape(shape),)

        return apply_op("max", (t,), np.max(t.data), backward_fn)

    index = np.expand_dims(np.argmax(t.data, axis=axis), axis)

    def backward_fn(g):
        grad = np.zeros(shape)
        np.put_along_axis(grad, index, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return apply_op("max", (t,), np.max(t.data, axis=axis), backward_fn)


_REDUCTIONS = {"sum": sum, "mean": mean, "max_over_axis": max_over_axis, "max": max_over_axis}


def reduce(op: str, t: Tensor, axis: Optional[int] = None) -> Tensor:
    """Dispatch a reduction by name."""
    try:
        fn = _REDUCTIONS[op]
    except KeyError:
        raise ValueError(f"Unknown reduction: {op}") from None
    return fn(t, axis)


# Structural


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    a_data, b_data = a.data, b.data
    return apply_op(
        "matmul",
        (a, b),
        a_data @ b_data,
        lambda g: (g @ b_data.T, a_data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return apply_op("transpose", (a,), a.data.T.copy(), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    source = a.data.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot view {source} as {tuple(shape)}") from None
    return apply_op("reshape", (a,), out, lambda g: (g.reshape(source),))


def flatten(a: Tensor) -> Tensor:
    """Collapse everything after the batch axis."""
    return reshape(a, (a.shape[0], -1))


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-feature (axis 1) bias to an N×F or N×F×H×W tensor."""
    if bias.ndim != 1 or x.ndim < 2 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit input {x.shape}")
    view = (1, -1) + (1,) * (x.ndim - 2)
    other_axes = tuple(i for i in range(x.ndim) if i != 1)
    return apply_op(
        "add_bias",
        (x, bias),
        x.data + bias.data.reshape(view),
        lambda g: (g, g.sum(axis=other_axes)),
    )


def global_avg_pool(x: Tensor) -> Tensor:
    """N×C×H×W → N×C by averaging each feature map."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected N×C×H×W, got {x.shape}")
    n, c, h, w = x.shape

    def backward_fn(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy(),)

    return apply_op("global_avg_pool", (x,), x.data.mean(axis=(2, 3)), backward_fn)


def conv_output_extent(
    size: int,
    kernel: int,
    stride: int,
    padding: int,
    allow_truncation: bool = False,
) -> int:
    """Output extent along one axis; raises when the window grid does not tile exactly."""
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(f"conv2d: kernel {kernel} larger than padded input {size + 2 * padding}")
    if span % stride and not allow_truncation:
        raise ShapeError(
            f"conv2d: ({size} + 2*{padding} - {kernel}) / {stride} + 1 is not integral"
        )
    return span // stride + 1


def conv2d(
    x: Tensor,
    kernel: Tensor,
    stride: IntPair = 1,
    padding: IntPair = 0,
    allow_truncation: bool = False,
) -> Tensor:
    """2-D cross-correlation of N×C×H×W input with an F×C×kh×kw kernel."""
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if c != kc:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc}")
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(padding, "padding")
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ShapeError(f"conv2d: invalid stride {stride} or padding {padding}")
    ho = conv_output_extent(h, kh, sh, ph, allow_truncation)
    wo = conv_output_extent(w, kw, sw, pw, allow_truncation)

    padded = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    windows = windows[:, :, :ho, :wo]
    k_data = kernel.data
    out = np.tensordot(windows, k_data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward_fn(g):
        grad_kernel = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_windows = np.tensordot(g, k_data, axes=([1], [0]))
        grad_padded = np.zeros(padded.shape)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw
                ] += grad_windows[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_input = grad_padded[:, :, ph:ph + h, pw:pw + w]
        return (np.ascontiguousarray(grad_input), grad_kernel)

    return apply_op("conv2d", (x, kernel), out, backward_fn)
