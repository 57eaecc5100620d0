"""Configuration validators for experiment runs."""

from .errors import LabError


LAYER_TYPES = {"dense", "conv", "residual", "global_avg_pool", "flatten"}
ACTIVATION_KINDS = {"dsrelu", "relu", "leaky_relu", "sigmoid", "tanh", "mish"}
DATASET_SOURCES = {"synthetic", "csv", "raw"}
SYNTHETIC_KINDS = {"blobs", "spirals"}
OPTIMIZER_KEYS = {"alpha", "beta1", "beta2", "epsilon"}


class ValidationError(LabError):
    """Configuration validation error."""

    code = "config_invalid"

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__(f"Configuration validation failed: {errors}")


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


class ConfigValidator:
    """Validator for experiment configuration."""

    def __init__(self, config: dict):
        self.config = config
        self.errors: list[str] = []

    def validate(self) -> list[str]:
        """Run all validations and return list of errors."""
        self.errors = []

        self._validate_required_sections()
        self._validate_experiment()
        self._validate_dataset()
        self._validate_network()
        self._validate_activations()
        self._validate_optimizer()
        self._validate_training()
        self._validate_output()

        return self.errors

    def validate_or_raise(self) -> None:
        """Run validation and raise exception if errors found."""
        errors = self.validate()
        if errors:
            raise ValidationError(errors)

    def _validate_required_sections(self) -> None:
        for section in ["experiment", "dataset", "network", "activations", "training"]:
            if section not in self.config:
                self.errors.append(f"Missing required section: {section}")

    def _validate_experiment(self) -> None:
        experiment = self.config.get("experiment") or {}
        if "seed" not in experiment:
            self.errors.append("experiment.seed is required")
        elif not _is_int(experiment["seed"]) or experiment["seed"] < 0:
            self.errors.append("experiment.seed must be a nonnegative integer")

    def _validate_dataset(self) -> None:
        dataset = self.config.get("dataset") or {}
        source = dataset.get("source", "synthetic")
        if source not in DATASET_SOURCES:
            self.errors.append(
                f"dataset.source must be one of {sorted(DATASET_SOURCES)}, got {source!r}"
            )
            return
        if source in ("csv", "raw") and not dataset.get("path"):
            self.errors.append(f"dataset.path is required for source '{source}'")
        if source == "synthetic":
            synthetic = dataset.get("synthetic") or {}
            kind = synthetic.get("kind", "spirals")
            if kind not in SYNTHETIC_KINDS:
                self.errors.append(
                    f"dataset.synthetic.kind must be one of {sorted(SYNTHETIC_KINDS)}, got {kind!r}"
                )
            classes = synthetic.get("classes", 2)
            if not _is_int(classes) or classes < 2:
                self.errors.append("dataset.synthetic.classes must be an integer >= 2")
        label_column = dataset.get("label_column", "last")
        if label_column != "last" and not _is_int(label_column):
            self.errors.append("dataset.label_column must be 'last' or a column index")

    def _validate_network(self) -> None:
        network = self.config.get("network") or {}
        shape = network.get("input_shape")
        if not isinstance(shape, list) or len(shape) not in (1, 3):
            self.errors.append("network.input_shape must be [D] or [C, H, W]")
        elif not all(_is_int(d) and d > 0 for d in shape):
            self.errors.append("network.input_shape extents must be positive integers")

        num_classes = network.get("num_classes")
        if not _is_int(num_classes) or num_classes < 2:
            self.errors.append("network.num_classes must be an integer >= 2")

        layers = network.get("layers")
        if not isinstance(layers, list) or not layers:
            self.errors.append("network.layers must be a nonempty list")
            return
        for index, layer in enumerate(layers):
            layer_type = layer.get("type") if isinstance(layer, dict) else None
            if layer_type not in LAYER_TYPES:
                self.errors.append(f"network.layers[{index}]: unknown type {layer_type!r}")
            elif layer_type == "dense" and not (_is_int(layer.get("out")) and layer["out"] > 0):
                self.errors.append(f"network.layers[{index}]: dense.out must be a positive integer")
            elif layer_type in ("conv", "residual") and not (
                _is_int(layer.get("filters")) and layer["filters"] > 0
            ):
                self.errors.append(f"network.layers[{index}]: {layer_type}.filters must be a positive integer")

    def _validate_activations(self) -> None:
        activations = self.config.get("activations")
        if not isinstance(activations, list) or not activations:
            self.errors.append("activations must be a nonempty list")
            return

        labels = []
        for index, entry in enumerate(activations):
            kind = entry.get("kind") if isinstance(entry, dict) else None
            if kind not in ACTIVATION_KINDS:
                self.errors.append(f"activations[{index}]: unknown kind {kind!r}")
                continue
            labels.append(entry.get("label", kind))
            if kind == "leaky_relu" and not entry.get("alpha", 0.01) > 0:
                self.errors.append(f"activations[{index}]: leaky_relu alpha must be > 0")
            if kind == "dsrelu":
                self._validate_schedule(index, entry)

        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        for label in duplicates:
            self.errors.append(f"activations: duplicate entry '{label}' (set a distinct label)")

    def _validate_schedule(self, index: int, entry: dict) -> None:
        for slope_key, angle_key in (("a", "a_deg"), ("b", "b_deg")):
            if slope_key in entry:
                if not (_is_number(entry[slope_key]) and entry[slope_key] > 0):
                    self.errors.append(f"activations[{index}]: {slope_key} must be > 0 (first quadrant)")
            elif angle_key in entry:
                angle = entry[angle_key]
                if not (_is_number(angle) and 0 < angle < 90):
                    self.errors.append(f"activations[{index}]: {angle_key} must lie in (0, 90)")
        if "k" in entry and not (_is_number(entry["k"]) and entry["k"] > 0):
            self.errors.append(f"activations[{index}]: k must be > 0")

    def _validate_optimizer(self) -> None:
        optimizer = self.config.get("optimizer") or {}
        unknown = sorted(set(optimizer) - OPTIMIZER_KEYS)
        if unknown:
            self.errors.append(f"optimizer has unknown keys {unknown}, expected {sorted(OPTIMIZER_KEYS)}")
        alpha = optimizer.get("alpha", 1e-4)
        if not (_is_number(alpha) and alpha > 0):
            self.errors.append("optimizer.alpha must be > 0")
        for key in ("beta1", "beta2"):
            value = optimizer.get(key, 0.9)
            if not (_is_number(value) and 0 <= value < 1):
                self.errors.append(f"optimizer.{key} must lie in [0, 1)")
        epsilon = optimizer.get("epsilon", 1e-8)
        if not (_is_number(epsilon) and epsilon > 0):
            self.errors.append("optimizer.epsilon must be > 0")

    def _validate_training(self) -> None:
        training = self.config.get("training") or {}
        if "max_epochs" not in training:
            self.errors.append("training.max_epochs is required")
        for key, minimum, default in (
            ("max_epochs", 1, 1),
            ("early_stop_patience", 1, 15),
            ("batch_size", 1, 32),
            ("eval_batch_size", 1, 256),
            ("k_folds", 2, 5),
            ("parallel", 1, 1),
        ):
            value = training.get(key, default)
            if not _is_int(value) or value < minimum:
                self.errors.append(f"training.{key} must be an integer >= {minimum}")
        granularity = training.get("progress_granularity", "epoch")
        if granularity not in ("epoch", "batch"):
            self.errors.append("training.progress_granularity must be 'epoch' or 'batch'")

        k_values = (self.config.get("k_sweep") or {}).get("k_values", [5])
        if not isinstance(k_values, list) or not all(_is_number(k) and k > 0 for k in k_values):
            self.errors.append("k_sweep.k_values must be a list of positive numbers")

    def _validate_output(self) -> None:
        output_format = (self.config.get("output") or {}).get("format", "csv")
        if output_format not in ("csv", "both"):
            self.errors.append("output.format must be 'csv' or 'both'")


def validate_config(config: dict) -> list[str]:
    """Validate configuration and return list of errors."""
    validator = ConfigValidator(config)
    return validator.validate()


def validate_config_or_raise(config: dict) -> None:
    """Validate configuration and raise exception if errors found."""
    validator = ConfigValidator(config)
    validator.validate_or_raise()
