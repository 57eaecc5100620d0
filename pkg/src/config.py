"""Experiment configuration: loading, merging and typed access."""

import copy
import hashlib
import json
from pathlib import Path
from typing import Optional

import yaml

from .activations import ActivationKind
from .data import Dataset, load_csv, load_raw_images, synth_blobs, synth_spirals
from .errors import DatasetError
from .network import NetworkSpec
from .optim import AdamConfig


def load_yaml(path: Path) -> dict:
    """Load a YAML (or JSON) configuration file.

    A run manifest is accepted too: its `config_snapshot` is returned.
    """
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if isinstance(data, dict) and "config_snapshot" in data:
        return data["config_snapshot"]
    return data


def deep_merge(base: dict, override: dict) -> dict:
    """Deep merge override into base config.

    Lists are replaced, not merged.
    Nested dicts are merged recursively.
    """
    result = copy.deepcopy(base)

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)

    return result


def load_config(
    base_path: Path,
    override_paths: Optional[list[Path]] = None,
) -> dict:
    """Load base config and apply overrides in order."""
    config = load_yaml(base_path)

    for override_path in override_paths or []:
        config = deep_merge(config, load_yaml(override_path))

    return config


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True)
    return f"sha256:{hashlib.sha256(canonical.encode()).hexdigest()}"


class ExperimentConfig:
    """Typed read-only view over a raw experiment config dict."""

    def __init__(self, config: dict):
        self._config = config

    @property
    def raw(self) -> dict:
        return self._config

    def _section(self, name: str) -> dict:
        return self._config.get(name) or {}

    # Experiment
    @property
    def name(self) -> str:
        return self._section("experiment").get("name", "experiment")

    @property
    def seed(self) -> int:
        return int(self._section("experiment")["seed"])

    @property
    def output_dir(self) -> Path:
        return Path(self._section("experiment").get("output_dir", "./output"))

    # Dataset
    @property
    def dataset(self) -> dict:
        return self._section("dataset")

    @property
    def dataset_source(self) -> str:
        return self.dataset.get("source", "synthetic")

    @property
    def as_signal(self) -> bool:
        return bool(self.dataset.get("as_signal", False))

    # Network
    @property
    def network(self) -> dict:
        return self._section("network")

    @property
    def num_classes(self) -> int:
        return int(self.network["num_classes"])

    # Activations
    @property
    def activations(self) -> list[ActivationKind]:
        return [ActivationKind.from_dict(entry) for entry in self._config.get("activations", [])]

    # Optimizer
    @property
    def adam(self) -> AdamConfig:
        return AdamConfig.from_dict(self._section("optimizer"))

    # Training
    @property
    def training(self) -> dict:
        return self._section("training")

    @property
    def batch_size(self) -> int:
        return int(self.training.get("batch_size", 32))

    @property
    def eval_batch_size(self) -> int:
        return int(self.training.get("eval_batch_size", 256))

    @property
    def max_epochs(self) -> int:
        return int(self.training["max_epochs"])

    @property
    def early_stop_patience(self) -> int:
        return int(self.training.get("early_stop_patience", 15))

    @property
    def k_folds(self) -> int:
        return int(self.training.get("k_folds", 5))

    @property
    def progress_granularity(self) -> str:
        return self.training.get("progress_granularity", "epoch")

    @property
    def parallel(self) -> int:
        return int(self.training.get("parallel", 1))

    @property
    def serial_timing(self) -> bool:
        return bool(self.training.get("serial_timing", False))

    # Output
    @property
    def output_format(self) -> str:
        return self._section("output").get("format", "csv")

    @property
    def write_curves(self) -> bool:
        return bool(self._section("output").get("curves", True))

    # K sweep
    @property
    def k_values(self) -> list[float]:
        return [float(k) for k in self._section("k_sweep").get("k_values", [5])]

    def network_spec(self, activation: ActivationKind, seed: int) -> NetworkSpec:
        return NetworkSpec.from_dict(self.network, activation=activation, seed=seed)

    def with_overrides(self, override: dict) -> "ExperimentConfig":
        return ExperimentConfig(deep_merge(self._config, override))

    def load_dataset(self) -> Dataset:
        """Materialise the configured dataset (file or synthetic)."""
        source = self.dataset_source
        if source == "synthetic":
            dataset = _synthetic_dataset(self.dataset.get("synthetic", {}), self.seed)
        elif source == "csv":
            dataset = load_csv(
                Path(self.dataset["path"]),
                label_column=self.dataset.get("label_column", "last"),
                skip_header=bool(self.dataset.get("skip_header", False)),
                class_count=self.dataset.get("class_count"),
            )
        elif source == "raw":
            dataset = load_raw_images(Path(self.dataset["path"]))
        else:
            raise DatasetError(f"Unknown dataset source: {source!r}")
        if self.as_signal:
            dataset = dataset.as_signal_images()
        return dataset


def _synthetic_dataset(spec: dict, seed: int) -> Dataset:
    kind = spec.get("kind", "spirals")
    data_seed = int(spec.get("seed", seed))
    if kind == "blobs":
        return synth_blobs(
            classes=int(spec.get("classes", 2)),
            per_class=int(spec.get("per_class", 200)),
            dim=int(spec.get("dim", 2)),
            spread=float(spec.get("spread", 0.3)),
            seed=data_seed,
        )
    if kind == "spirals":
        return synth_spirals(
            classes=int(spec.get("classes", 2)),
            per_class=int(spec.get("per_class", 100)),
            noise=float(spec.get("noise", 0.2)),
            seed=data_seed,
        )
    raise DatasetError(f"Unknown synthetic dataset kind: {kind!r}")

