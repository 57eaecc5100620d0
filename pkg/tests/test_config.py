"""Tests for configuration loading and validation."""

import pytest
from pathlib import Path

from src.activations import ActivationType
from src.config import ExperimentConfig, config_hash, deep_merge, load_config, load_yaml
from src.errors import DatasetError
from src.network import ResidualBlockSpec, build
from src.validators import ConfigValidator, ValidationError, validate_config, validate_config_or_raise


DEFAULT = Path("configs/default.yaml")
OVERRIDES = sorted(Path("configs/overrides").glob("*.yaml"))


class TestConfigLoading:
    """Tests for config loading functions."""

    def test_deep_merge_simple(self):
        """Test simple deep merge."""
        base = {"a": 1, "b": 2}
        override = {"b": 3, "c": 4}
        result = deep_merge(base, override)

        assert result == {"a": 1, "b": 3, "c": 4}

    def test_deep_merge_nested(self):
        """Test deep merge with nested dicts."""
        base = {"training": {"optimizer": {"alpha": 1e-4, "beta1": 0.9}}}
        override = {"training": {"optimizer": {"alpha": 1e-3}}}
        result = deep_merge(base, override)

        assert result["training"]["optimizer"] == {"alpha": 1e-3, "beta1": 0.9}

    def test_deep_merge_replaces_lists(self):
        """Lists such as the activation list are replaced, not appended."""
        base = {"activations": [{"kind": "dsrelu"}, {"kind": "relu"}]}
        result = deep_merge(base, {"activations": [{"kind": "mish"}]})

        assert result["activations"] == [{"kind": "mish"}]
        assert base["activations"][1] == {"kind": "relu"}

    def test_load_default_config(self):
        """Test loading default config."""
        config = load_config(DEFAULT)
        assert config["experiment"]["seed"] == 42
        assert len(config["activations"]) == 6

    def test_manifest_snapshot(self, tmp_path):
        """A manifest's config_snapshot can be loaded as a config."""
        path = tmp_path / "manifest.json"
        path.write_text('{"config_hash": "x", "config_snapshot": {"experiment": {"seed": 3}}}')
        assert load_yaml(path) == {"experiment": {"seed": 3}}

    def test_config_hash_ignores_key_order(self):
        """Hashes are taken over canonical JSON."""
        assert config_hash({"a": 1, "b": {"c": 2}}) == config_hash({"b": {"c": 2}, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestValidation:
    """Tests for config validation."""

    def test_valid_config(self):
        """Test that default config is valid."""
        errors = validate_config(load_config(DEFAULT))
        assert errors == [], f"Errors found: {errors}"

    @pytest.mark.parametrize("override", OVERRIDES, ids=lambda p: p.stem)
    def test_overrides_valid(self, override):
        """Every shipped override merges into a valid config."""
        errors = validate_config(load_config(DEFAULT, [override]))
        assert errors == [], f"Errors found: {errors}"

    def test_duplicate_activations(self, tiny_raw):
        """The same activation twice needs distinct labels."""
        tiny_raw["activations"] = [{"kind": "relu"}, {"kind": "relu"}]
        errors = ConfigValidator(tiny_raw).validate()
        assert any("duplicate entry 'relu'" in e for e in errors)

        tiny_raw["activations"] = [{"kind": "dsrelu", "k": 1}, {"kind": "dsrelu", "k": 10, "label": "dsrelu_k10"}]
        assert validate_config(tiny_raw) == []

    def test_schedule_angles(self, tiny_raw):
        """Slope angles must lie strictly inside the first quadrant."""
        tiny_raw["activations"] = [{"kind": "dsrelu", "a_deg": 90}, {"kind": "relu"}]
        errors = validate_config(tiny_raw)
        assert any("a_deg must lie in (0, 90)" in e for e in errors)

    def test_training_bounds(self, tiny_raw):
        """Patience and folds have lower bounds."""
        tiny_raw["training"].update(early_stop_patience=0, k_folds=1)
        errors = validate_config(tiny_raw)
        assert "training.early_stop_patience must be an integer >= 1" in errors
        assert "training.k_folds must be an integer >= 2" in errors

    def test_missing_sections(self):
        """Required sections are reported."""
        errors = validate_config({})
        assert "Missing required section: network" in errors
        assert "experiment.seed is required" in errors

    def test_file_source_needs_path(self, tiny_raw):
        """csv and raw sources need a path."""
        tiny_raw["dataset"] = {"source": "csv"}
        assert "dataset.path is required for source 'csv'" in validate_config(tiny_raw)

    def test_unknown_optimizer_key(self, tiny_raw):
        """Misspelled Adam settings are reported instead of reaching AdamConfig."""
        tiny_raw["optimizer"]["lr"] = 0.01
        errors = validate_config(tiny_raw)
        assert errors == ["optimizer has unknown keys ['lr'], expected ['alpha', 'beta1', 'beta2', 'epsilon']"]

    def test_raise(self, tiny_raw):
        """validate_config_or_raise carries the error list and code."""
        tiny_raw["optimizer"]["alpha"] = -1
        with pytest.raises(ValidationError) as exc:
            validate_config_or_raise(tiny_raw)
        assert exc.value.code == "config_invalid"
        assert exc.value.errors == ["optimizer.alpha must be > 0"]


class TestExperimentConfig:
    """Tests for ExperimentConfig wrapper."""

    def test_config_properties(self, tiny_config):
        """Test config wrapper properties."""
        assert tiny_config.seed == 7
        assert tiny_config.batch_size == 16
        assert tiny_config.eval_batch_size == 256
        assert tiny_config.k_folds == 2
        assert tiny_config.adam.alpha == 0.01
        assert tiny_config.adam.beta2 == 0.999
        assert tiny_config.k_values == [1.0, 5.0]
        assert [a.type for a in tiny_config.activations] == [ActivationType.DSRELU, ActivationType.RELU]

    def test_default_activation_schedule(self):
        """The default DSReLU entry uses 85° and 10° with k = 5."""
        cfg = ExperimentConfig(load_config(DEFAULT))
        schedule = cfg.activations[0].schedule
        assert schedule.slope(0.5) == pytest.approx(5.803190, abs=1e-6)
        assert schedule.k == 5.0

    def test_with_overrides(self, tiny_config):
        """with_overrides leaves the original untouched."""
        changed = tiny_config.with_overrides({"training": {"max_epochs": 9}})
        assert changed.max_epochs == 9
        assert tiny_config.max_epochs == 2

    def test_network_spec(self, tiny_config):
        """The network section becomes a spec with the given activation and seed."""
        relu = tiny_config.activations[1]
        spec = tiny_config.network_spec(relu, seed=3)
        assert spec.activation == relu
        assert spec.seed == 3
        assert build(spec).parameter_count == (2 * 4 + 4) + (4 * 2 + 2)

    def test_residual_override_builds(self):
        """The CIFAR override describes a buildable residual network."""
        cfg = ExperimentConfig(load_config(DEFAULT, [Path("configs/overrides/cifar_resnet.yaml")]))
        spec = cfg.network_spec(cfg.activations[0], seed=0)
        assert any(isinstance(layer, ResidualBlockSpec) for layer in spec.layers)
        assert spec.input_shape == (3, 32, 32)
        build(spec)

    def test_load_dataset(self, tiny_config):
        """Synthetic datasets come from the config seed."""
        dataset = tiny_config.load_dataset()
        assert dataset.size == 40
        assert dataset.feature_shape == (2,)

    def test_signal_dataset(self, tmp_path, tiny_raw):
        """as_signal turns CSV rows into 1×1×D images."""
        path = tmp_path / "beats.csv"
        path.write_text("0.1,0.2,0.3,0\n0.4,0.5,0.6,1\n")
        tiny_raw["dataset"] = {"source": "csv", "path": str(path), "as_signal": True}
        dataset = ExperimentConfig(tiny_raw).load_dataset()
        assert dataset.features.shape == (2, 1, 1, 3)

    def test_unknown_source(self, tiny_raw):
        """Unknown sources fail at load time."""
        tiny_raw["dataset"] = {"source": "hdf5"}
        with pytest.raises(DatasetError):
            ExperimentConfig(tiny_raw).load_dataset()
