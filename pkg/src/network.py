"""Declarative MLP / residual CNN construction with a pluggable activation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .activations import ActivationKind, TrainingProgress, activate, slope
from .errors import ShapeError
from .tensor import (
    IntPair,
    Mode,
    Tensor,
    add,
    add_bias,
    conv2d,
    conv_output_extent,
    flatten,
    global_avg_pool,
    matmul,
    no_grad,
    transpose,
)


def _pair(value: IntPair) -> tuple[int, int]:
    if isinstance(value, int):
        return value, value
    first, second = value
    return int(first), int(second)


# =============================================================================
# LAYER SPECS
# =============================================================================


@dataclass(frozen=True)
class DenseSpec:
    out: int
    type: str = field(default="dense", init=False)


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: IntPair = 3
    stride: IntPair = 1
    padding: IntPair = 0
    type: str = field(default="conv", init=False)


@dataclass(frozen=True)
class ResidualBlockSpec:
    """Two k×k convolutions plus an identity or 1×1 projection shortcut."""
    filters: int
    stride: int = 1
    kernel: IntPair = 3
    type: str = field(default="residual", init=False)


@dataclass(frozen=True)
class GlobalAvgPoolSpec:
    type: str = field(default="global_avg_pool", init=False)


@dataclass(frozen=True)
class FlattenSpec:
    type: str = field(default="flatten", init=False)


LayerSpec = Union[DenseSpec, ConvSpec, ResidualBlockSpec, GlobalAvgPoolSpec, FlattenSpec]


def _freeze_pair(value) -> IntPair:
    return value if isinstance(value, int) else tuple(int(v) for v in value)


def layer_from_dict(data: dict) -> LayerSpec:
    layer_type = data.get("type")
    if layer_type == "dense":
        return DenseSpec(out=int(data["out"]))
    if layer_type == "conv":
        return ConvSpec(
            filters=int(data["filters"]),
            kernel=_freeze_pair(data.get("kernel", 3)),
            stride=_freeze_pair(data.get("stride", 1)),
            padding=_freeze_pair(data.get("padding", data.get("pad", 0))),
        )
    if layer_type == "residual":
        return ResidualBlockSpec(
            filters=int(data["filters"]),
            stride=int(data.get("stride", 1)),
            kernel=_freeze_pair(data.get("kernel", 3)),
        )
    if layer_type == "global_avg_pool":
        return GlobalAvgPoolSpec()
    if layer_type == "flatten":
        return FlattenSpec()
    raise ShapeError(f"Unknown layer type: {layer_type!r}")


def layer_to_dict(layer: LayerSpec) -> dict:
    data = {"type": layer.type}
    for name, value in vars(layer).items():
        if name != "type":
            data[name] = list(value) if isinstance(value, tuple) else value
    return data


@dataclass(frozen=True)
class NetworkSpec:
    """Layer stack description. Shapes exclude the batch axis."""
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    activation: ActivationKind
    num_classes: int
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [layer_to_dict(layer) for layer in self.layers],
            "activation": self.activation.to_dict(),
            "num_classes": self.num_classes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(
        cls,
        data: dict,
        activation: Optional[ActivationKind] = None,
        seed: Optional[int] = None,
    ) -> "NetworkSpec":
        if activation is None:
            activation = ActivationKind.from_dict(data["activation"])
        return cls(
            input_shape=tuple(int(d) for d in data["input_shape"]),
            layers=tuple(layer_from_dict(layer) for layer in data["layers"]),
            activation=activation,
            num_classes=int(data["num_classes"]),
            seed=int(data.get("seed", 0) if seed is None else seed),
        )

    def with_activation(self, activation: ActivationKind) -> "NetworkSpec":
        return NetworkSpec(self.input_shape, self.layers, activation, self.num_classes, self.seed)

    def with_seed(self, seed: int) -> "NetworkSpec":
        return NetworkSpec(self.input_shape, self.layers, self.activation, self.num_classes, seed)


def mlp_spec(
    input_dim: int,
    hidden: Sequence[int],
    num_classes: int,
    activation: ActivationKind,
    seed: int = 0,
) -> NetworkSpec:
    layers = tuple(DenseSpec(width) for width in hidden) + (DenseSpec(num_classes),)
    return NetworkSpec((input_dim,), layers, activation, num_classes, seed)


def residual_spec(
    input_shape: Sequence[int],
    num_classes: int,
    activation: ActivationKind,
    stages: Sequence[int] = (2, 2, 2),
    base_filters: int = 8,
    kernel: IntPair = 3,
    seed: int = 0,
) -> NetworkSpec:
    """Stem conv, residual stages doubling filters (stride 2 after the first), pool, dense head.

    stages=(3, 4, 6, 3) with base_filters=64 is the ResNet-34 layout.
    """
    kh, kw = _pair(kernel)
    layers: list[LayerSpec] = [ConvSpec(base_filters, kernel=kernel, padding=(kh // 2, kw // 2))]
    filters = base_filters
    for stage, blocks in enumerate(stages):
        for block in range(blocks):
            stride = 2 if stage > 0 and block == 0 else 1
            layers.append(ResidualBlockSpec(filters, stride=stride, kernel=kernel))
        filters *= 2
    layers += [GlobalAvgPoolSpec(), DenseSpec(num_classes)]
    return NetworkSpec(tuple(input_shape), tuple(layers), activation, num_classes, seed)


# =============================================================================
# LAYERS
# =============================================================================


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    # gain sqrt(2), bound = gain * sqrt(3 / fan_in)
    bound = math.sqrt(2.0) * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    """Base runtime layer."""

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return []

    def activation_layers(self) -> list["Activation"]:
        return []

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = Tensor(
            _kaiming_uniform(rng, (out_features, in_features), in_features), requires_grad=True
        )
        self.bias = Tensor(np.zeros(out_features), requires_grad=True)

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]

    def forward(self, x: Tensor) -> Tensor:
        return add_bias(matmul(x, transpose(self.weight)), self.bias)


class Conv(Layer):
    def __init__(
        self,
        in_channels: int,
        filters: int,
        kernel: IntPair,
        stride: IntPair,
        padding: IntPair,
        rng: np.random.Generator,
        allow_truncation: bool = False,
    ):
        kh, kw = _pair(kernel)
        fan_in = in_channels * kh * kw
        self.kernel = Tensor(
            _kaiming_uniform(rng, (filters, in_channels, kh, kw), fan_in), requires_grad=True
        )
        self.bias = Tensor(np.zeros(filters), requires_grad=True)
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        self.allow_truncation = allow_truncation

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.kernel", self.kernel), (f"{prefix}.bias", self.bias)]

    def forward(self, x: Tensor) -> Tensor:
        out = conv2d(x, self.kernel, self.stride, self.padding, self.allow_truncation)
        return add_bias(out, self.bias)


class Activation(Layer):
    """Applies the network activation; DSReLU reads the slope cached by `set_progress`."""

    def __init__(self, kind: ActivationKind):
        self.kind = kind
        self.slope: Optional[float] = None
        self.set_progress(TrainingProgress(0.0))

    def activation_layers(self) -> list["Activation"]:
        return [self]

    def set_progress(self, progress: TrainingProgress) -> None:
        if self.kind.is_dsrelu:
            self.slope = slope(self.kind.schedule, progress)

    def forward(self, x: Tensor) -> Tensor:
        return activate(x, self.kind, self.slope)


class ResidualBlock(Layer):
    """act(conv2(act(conv1(x))) + shortcut(x))."""

    def __init__(
        self,
        in_channels: int,
        spec: ResidualBlockSpec,
        activation: ActivationKind,
        rng: np.random.Generator,
    ):
        kh, kw = _pair(spec.kernel)
        padding = (kh // 2, kw // 2)
        self.conv1 = Conv(in_channels, spec.filters, spec.kernel, spec.stride, padding, rng,
                          allow_truncation=True)
        self.act1 = Activation(activation)
        self.conv2 = Conv(spec.filters, spec.filters, spec.kernel, 1, padding, rng)
        self.projection: Optional[Conv] = None
        if spec.stride != 1 or in_channels != spec.filters:
            self.projection = Conv(in_channels, spec.filters, 1, spec.stride, 0, rng,
                                   allow_truncation=True)
        self.act2 = Activation(activation)

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        params = self.conv1.named_parameters(f"{prefix}.conv1")
        params += self.conv2.named_parameters(f"{prefix}.conv2")
        if self.projection is not None:
            params += self.projection.named_parameters(f"{prefix}.projection")
        return params

    def activation_layers(self) -> list[Activation]:
        return [self.act1, self.act2]

    def forward(self, x: Tensor) -> Tensor:
        out = self.conv2.forward(self.act1.forward(self.conv1.forward(x)))
        shortcut = x if self.projection is None else self.projection.forward(x)
        return self.act2.forward(add(out, shortcut))


class GlobalAvgPool(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return global_avg_pool(x)


class Flatten(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return flatten(x)


# =============================================================================
# NETWORK
# =============================================================================


class Network:
    """Instantiated network: layers, parameters and the current training progress."""

    def __init__(self, spec: NetworkSpec, layers: list[Layer]):
        self.spec = spec
        self.layers = layers
        self.progress = TrainingProgress(0.0)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params: list[tuple[str, Tensor]] = []
        for index, layer in enumerate(self.layers):
            params += layer.named_parameters(f"layers.{index}")
        return params

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    @property
    def parameter_count(self) -> int:
        return sum(tensor.size for tensor in self.parameters())

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([tensor.data.reshape(-1) for tensor in self.parameters()])

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def set_progress(self, t: "TrainingProgress | float") -> None:
        """Re-evaluate s(t) on every DSReLU layer; other activations ignore it."""
        self.progress = t if isinstance(t, TrainingProgress) else TrainingProgress(t)
        for layer in self.layers:
            for act in layer.activation_layers():
                act.set_progress(self.progress)

    @property
    def current_slope(self) -> Optional[float]:
        if not self.spec.activation.is_dsrelu:
            return None
        return slope(self.spec.activation.schedule, self.progress)

    def forward(self, batch: "Tensor | np.ndarray", mode: Mode = Mode.TRAINING) -> Tensor:
        """Logits N×num_classes. Inference mode records nothing."""
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.shape[1:] != self.spec.input_shape:
            raise ShapeError(
                f"batch shape {x.shape} does not match input shape {self.spec.input_shape}"
            )
        if Mode(mode) is Mode.INFERENCE:
            with no_grad():
                return self._run(x)
        return self._run(x)

    def _run(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x


def _layer_error(index: int, layer: LayerSpec, message: str) -> ShapeError:
    return ShapeError(f"layer {index} ({layer.type}): {message}")


def build(spec: NetworkSpec) -> Network:
    """Instantiate `spec`, validating shape composition layer by layer."""
    rng = np.random.default_rng(spec.seed)
    shape = tuple(spec.input_shape)
    weighted = [i for i, layer in enumerate(spec.layers) if isinstance(layer, (DenseSpec, ConvSpec, ResidualBlockSpec))]
    if not weighted:
        raise ShapeError("network has no weighted layer")
    head_index = weighted[-1]
    layers: list[Layer] = []

    for index, layer in enumerate(spec.layers):
        if isinstance(layer, DenseSpec):
            if len(shape) != 1:
                raise _layer_error(index, layer, f"expects flat input, got {shape}; add a flatten or pool layer")
            layers.append(Dense(shape[0], layer.out, rng))
            shape = (layer.out,)
        elif isinstance(layer, ConvSpec):
            if len(shape) != 3:
                raise _layer_error(index, layer, f"expects C×H×W input, got {shape}")
            kh, kw = _pair(layer.kernel)
            sh, sw = _pair(layer.stride)
            ph, pw = _pair(layer.padding)
            try:
                h = conv_output_extent(shape[1], kh, sh, ph)
                w = conv_output_extent(shape[2], kw, sw, pw)
            except ShapeError as e:
                raise _layer_error(index, layer, str(e)) from None
            layers.append(Conv(shape[0], layer.filters, layer.kernel, layer.stride, layer.padding, rng))
            shape = (layer.filters, h, w)
        elif isinstance(layer, ResidualBlockSpec):
            if len(shape) != 3:
                raise _layer_error(index, layer, f"expects C×H×W input, got {shape}")
            kh, kw = _pair(layer.kernel)
            if kh % 2 == 0 or kw % 2 == 0:
                raise _layer_error(index, layer, f"kernel {layer.kernel} must be odd")
            try:
                h = conv_output_extent(shape[1], kh, layer.stride, kh // 2, allow_truncation=True)
                w = conv_output_extent(shape[2], kw, layer.stride, kw // 2, allow_truncation=True)
            except ShapeError as e:
                raise _layer_error(index, layer, str(e)) from None
            layers.append(ResidualBlock(shape[0], layer, spec.activation, rng))
            shape = (layer.filters, h, w)
        elif isinstance(layer, GlobalAvgPoolSpec):
            if len(shape) != 3:
                raise _layer_error(index, layer, f"expects C×H×W input, got {shape}")
            layers.append(GlobalAvgPool())
            shape = (shape[0],)
        elif isinstance(layer, FlattenSpec):
            layers.append(Flatten())
            shape = (int(np.prod(shape)),)
        else:
            raise _layer_error(index, layer, "unknown layer")

        if isinstance(layer, (DenseSpec, ConvSpec)) and index != head_index:
            layers.append(Activation(spec.activation))

    if shape != (spec.num_classes,):
        raise ShapeError(f"network outputs {shape}, expected ({spec.num_classes},)")

    net = Network(spec, layers)
    net.set_progress(TrainingProgress(0.0))
    return net


def forward(net: Network, batch: "Tensor | np.ndarray", mode: Mode = Mode.TRAINING) -> Tensor:
    return net.forward(batch, mode)


def set_progress(net: Network, t: "TrainingProgress | float") -> None:
    net.set_progress(t)


# =============================================================================
# PARAMETER EXPORT
# =============================================================================


def export_parameters(net: Network, stem: Path) -> tuple[Path, Path]:
    """Write `<stem>.bin` (little-endian f64, declaration order) and `<stem>.json`."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name, tensor in net.named_parameters():
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "count": tensor.size})
        chunks.append(tensor.data.astype("<f8").tobytes())
        offset += tensor.size

    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    bin_path.write_bytes(b"".join(chunks))
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump({"spec": net.spec.to_dict(), "parameters": entries}, f, indent=2)
    return bin_path, json_path


def import_parameters(net: Network, stem: Path) -> None:
    """Load values written by `export_parameters` into a network of the same spec."""
    stem = Path(stem)
    with open(stem.with_suffix(".json"), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    values = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    params = dict(net.named_parameters())
    for entry in manifest["parameters"]:
        tensor = params.get(entry["name"])
        if tensor is None or list(tensor.shape) != entry["shape"]:
            raise ShapeError(f"parameter {entry['name']} does not match the network")
        chunk = values[entry["offset"]:entry["offset"] + entry["count"]]
        tensor.data = chunk.reshape(entry["shape"]).astype(np.float64)
