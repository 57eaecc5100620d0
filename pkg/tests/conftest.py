"""Shared fixtures: a tiny experiment that trains in well under a second."""

import pytest

from src.config import ExperimentConfig


@pytest.fixture
def tiny_raw() -> dict:
    return {
        "experiment": {"name": "tiny", "seed": 7, "output_dir": "./output"},
        "dataset": {
            "source": "synthetic",
            "synthetic": {"kind": "blobs", "classes": 2, "per_class": 20, "dim": 2, "spread": 0.3},
        },
        "network": {
            "input_shape": [2],
            "num_classes": 2,
            "layers": [{"type": "dense", "out": 4}, {"type": "dense", "out": 2}],
        },
        "activations": [{"kind": "dsrelu"}, {"kind": "relu"}],
        "optimizer": {"alpha": 0.01},
        "training": {
            "batch_size": 16,
            "max_epochs": 2,
            "early_stop_patience": 15,
            "k_folds": 2,
        },
        "k_sweep": {"k_values": [1, 5]},
        "output": {"format": "csv", "curves": True},
    }


@pytest.fixture
def tiny_config(tiny_raw) -> ExperimentConfig:
    return ExperimentConfig(tiny_raw)
