"""Tests for the command-line interface."""

import json

import pytest
import yaml
from click.testing import CliRunner

from src.cli import main
from src.data import load_csv, load_raw_images


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path, tiny_raw):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(tiny_raw))
    return path


def error_line(output: str) -> dict:
    line = next(line for line in output.splitlines() if line.startswith("error: "))
    return json.loads(line[len("error: "):])


class TestGenData:
    """Tests for gen-data."""

    def test_csv(self, runner, tmp_path):
        """Blobs are written as a labeled CSV."""
        out = tmp_path / "blobs.csv"
        result = runner.invoke(main, ["gen-data", "--kind", "blobs", "--classes", "3", "--per-class", "10",
                                      "--dim", "4", "--out", str(out)])
        assert result.exit_code == 0, result.output
        dataset = load_csv(out)
        assert dataset.features.shape == (30, 4)
        assert dataset.class_count == 3

    def test_raw(self, runner, tmp_path):
        """Spirals are written as 1×1×2 DSR1 images."""
        out = tmp_path / "spirals.dsr1"
        result = runner.invoke(main, ["gen-data", "--kind", "spirals", "--per-class", "5",
                                      "--format", "raw", "--out", str(out)])
        assert result.exit_code == 0, result.output
        dataset = load_raw_images(out)
        assert dataset.features.shape == (10, 1, 1, 2)
        assert dataset.features.min() == 0.0
        assert dataset.features.max() == 1.0


class TestRuns:
    """Tests for the training subcommands."""

    def test_cv(self, runner, tmp_path, config_file):
        """cv writes the report tables into --out."""
        out = tmp_path / "run"
        result = runner.invoke(main, ["cv", "--config", str(config_file), "--out", str(out)])
        assert result.exit_code == 0, result.output
        for name in ["metrics.csv", "summary.csv", "comparison.csv", "gap.csv", "timing.csv", "manifest.json"]:
            assert (out / name).exists(), name

    def test_seed_override(self, runner, tmp_path, config_file):
        """--seed lands in the manifest and its snapshot."""
        out = tmp_path / "run"
        result = runner.invoke(main, ["cv", "-c", str(config_file), "--out", str(out), "--seed", "11"])
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 11
        assert manifest["config_snapshot"]["experiment"]["seed"] == 11

    def test_train(self, runner, tmp_path, config_file):
        """train runs one activation on one fold."""
        out = tmp_path / "run"
        result = runner.invoke(main, ["train", "-c", str(config_file), "--activation", "relu",
                                      "--fold", "1", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "curves" / "relu_1.csv").exists()

    def test_train_unknown_activation(self, runner, tmp_path, config_file):
        """Unknown activation labels are rejected with the error line."""
        result = runner.invoke(main, ["train", "-c", str(config_file), "--activation", "gelu",
                                      "--out", str(tmp_path / "run")])
        assert result.exit_code == 1
        assert error_line(result.output)["code"] == "lab_error"

    def test_ksweep(self, runner, tmp_path, config_file):
        """ksweep writes one directory per --k."""
        out = tmp_path / "run"
        result = runner.invoke(main, ["ksweep", "-c", str(config_file), "--k", "1", "--k", "10", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "k_1" / "metrics.csv").exists()
        assert (out / "k_10" / "metrics.csv").exists()
        assert (out / "ksweep_summary.csv").exists()


class TestErrors:
    """Tests for error reporting."""

    def test_invalid_config(self, runner, tmp_path, tiny_raw):
        """Validation failures exit 1 with a config_invalid error line."""
        tiny_raw["training"]["early_stop_patience"] = 0
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(tiny_raw))
        result = runner.invoke(main, ["cv", "-c", str(path), "--out", str(tmp_path / "run")])
        assert result.exit_code == 1
        error = error_line(result.output)
        assert error["code"] == "config_invalid"
        assert "early_stop_patience" in error["message"]

    def test_unknown_optimizer_key(self, runner, tmp_path, tiny_raw):
        """A misspelled optimizer key is a config error, not a traceback."""
        tiny_raw["optimizer"]["lr"] = 0.01
        path = tmp_path / "lr.yaml"
        path.write_text(yaml.safe_dump(tiny_raw))
        result = runner.invoke(main, ["cv", "-c", str(path), "--out", str(tmp_path / "run")])
        assert result.exit_code == 1
        error = error_line(result.output)
        assert error["code"] == "config_invalid"
        assert "lr" in error["message"]

    def test_missing_dataset(self, runner, tmp_path, tiny_raw):
        """A missing dataset file is a dataset error."""
        tiny_raw["dataset"] = {"source": "csv", "path": str(tmp_path / "absent.csv")}
        path = tmp_path / "csv.yaml"
        path.write_text(yaml.safe_dump(tiny_raw))
        result = runner.invoke(main, ["cv", "-c", str(path), "--out", str(tmp_path / "run")])
        assert result.exit_code == 1
        assert error_line(result.output)["code"] == "dataset"


@pytest.mark.slow
class TestGradcheck:
    """Tests for the gradcheck command."""

    def test_passes(self, runner):
        """All gradient checks pass and exit 0."""
        result = runner.invoke(main, ["gradcheck"])
        assert result.exit_code == 0, result.output
        assert "checks passed" in result.output
