"""Tests for report records, tables and the run manifest."""

import json

import pandas as pd
import pytest

from src.config import ExperimentConfig
from src.errors import ReportError
from src.metrics import MetricRecord
from src.models import ComparisonReport, EpochRecord, FoldResult
from src.reports import (
    COMPARISON_COLUMNS,
    METRIC_COLUMNS,
    SUMMARY_COLUMNS,
    TIMING_COLUMNS,
    build_manifest,
    emit_k_sweep,
    emit_reports,
    summary_frame,
)
from src.training import cross_validate, k_sweep


def record(activation, fold, epoch, val_accuracy, val_loss=1.0, train_accuracy=0.9, seconds=0.5):
    return EpochRecord(
        activation=activation,
        fold=fold,
        epoch=epoch,
        t=float(epoch),
        slope=None,
        train_loss=0.5,
        val_loss=val_loss,
        train=MetricRecord(train_accuracy, train_accuracy, train_accuracy),
        val=MetricRecord(val_accuracy, val_accuracy, val_accuracy),
        wall_seconds=seconds,
    )


def fold(activation, index, val_accuracies, val_losses=None):
    losses = val_losses or [1.0] * len(val_accuracies)
    return FoldResult(
        activation,
        index,
        [record(activation, index, e, acc, loss) for e, (acc, loss) in enumerate(zip(val_accuracies, losses))],
    )


def two_activation_report() -> ComparisonReport:
    return ComparisonReport(
        results={
            "dsrelu": [fold("dsrelu", 0, [0.5, 0.6]), fold("dsrelu", 1, [0.7, 0.65])],
            "relu": [fold("relu", 0, [0.55, 0.5]), fold("relu", 1, [0.6, 0.62])],
        },
        dsrelu_labels=["dsrelu"],
    )


class TestRecords:
    """Tests for fold results and the comparison report."""

    def test_best_record_is_lowest_val_loss(self):
        """Ties in validation loss go to the earlier epoch."""
        result = fold("relu", 0, [0.5, 0.9, 0.7], val_losses=[0.8, 0.4, 0.4])
        assert result.best_record.epoch == 1
        assert result.generalization_gap == pytest.approx(0.9 - 0.9)

    def test_best_value_is_max_over_epochs(self):
        """best_value takes the maximum of a metric."""
        assert fold("relu", 0, [0.5, 0.9, 0.7]).best_value("val", "accuracy") == 0.9

    def test_improvement_against_best_other(self):
        """DSReLU is compared with the strongest baseline on the fold-mean of best values."""
        report = two_activation_report()
        assert report.best_validation("dsrelu", "accuracy") == pytest.approx(0.65)
        assert report.best_validation("relu", "accuracy") == pytest.approx(0.585)
        rows = report.improvements()
        accuracy = next(r for r in rows if r["metric"] == "val_accuracy")
        assert accuracy["best_other"] == "relu"
        assert accuracy["improvement_pct"] == pytest.approx((0.65 - 0.585) / 0.585 * 100)

    def test_no_baseline_no_comparison(self):
        """A DSReLU-only run has nothing to compare against."""
        report = ComparisonReport({"dsrelu": [fold("dsrelu", 0, [0.5])]}, ["dsrelu"])
        assert report.improvements() == []

    def test_timing_means(self):
        """Mean epoch seconds average over every epoch of every fold."""
        report = ComparisonReport({"relu": [fold("relu", 0, [0.5, 0.5]), fold("relu", 1, [0.5])]})
        assert report.mean_epoch_seconds("relu") == pytest.approx(0.5)


class TestSummary:
    """Tests for the summary table."""

    def test_best_flag(self):
        """is_best marks the top activation per metric and fold."""
        frame = summary_frame(two_activation_report())
        assert list(frame.columns) == SUMMARY_COLUMNS
        val_acc = frame[frame.metric == "val_accuracy"]
        best = val_acc[val_acc.is_best].set_index("fold")["activation"].to_dict()
        assert best == {"0": "dsrelu", "1": "dsrelu", "mean": "dsrelu"}
        fold0 = val_acc[val_acc.fold == "0"].set_index("activation")["value"].to_dict()
        assert fold0 == {"dsrelu": 0.6, "relu": 0.55}

    def test_ties_flag_both(self):
        """Equal best values are both flagged."""
        report = ComparisonReport({"a": [fold("a", 0, [0.5])], "b": [fold("b", 0, [0.5])]})
        frame = summary_frame(report)
        assert frame[frame.metric == "val_accuracy"].is_best.all()


class TestEmitReports:
    """Tests for the files written by a comparison run."""

    def test_one_activation_one_fold(self, tmp_path):
        """One activation, one fold and two epochs give four metric rows."""
        report = ComparisonReport({"relu": [fold("relu", 0, [0.5, 0.6])]})
        written = emit_reports(report, tmp_path)
        metrics = pd.read_csv(tmp_path / "metrics.csv")
        assert list(metrics.columns) == METRIC_COLUMNS
        assert len(metrics) == 4
        assert set(metrics.split) == {"train", "val"}
        assert (tmp_path / "curves" / "relu_0.csv").exists()
        assert tmp_path / "manifest.json" in written

    def test_all_tables(self, tmp_path, tiny_config):
        """A real run writes every table with its schema."""
        emit_reports(cross_validate(tiny_config), tmp_path, tiny_config)
        assert list(pd.read_csv(tmp_path / "comparison.csv").columns) == COMPARISON_COLUMNS
        timing = pd.read_csv(tmp_path / "timing.csv")
        assert list(timing.columns) == TIMING_COLUMNS
        assert timing.epochs.tolist() == [4, 4]
        metrics = pd.read_csv(tmp_path / "metrics.csv")
        assert len(metrics) == 2 * 2 * 2 * 2
        assert sorted(p.name for p in (tmp_path / "curves").iterdir()) == [
            "dsrelu_0.csv", "dsrelu_1.csv", "relu_0.csv", "relu_1.csv",
        ]

    def test_parquet_copy(self, tmp_path, tiny_raw):
        """format 'both' adds metrics.parquet with the same rows."""
        tiny_raw["output"]["format"] = "both"
        cfg = ExperimentConfig(tiny_raw)
        emit_reports(cross_validate(cfg), tmp_path, cfg)
        parquet = pd.read_parquet(tmp_path / "metrics.parquet")
        assert len(parquet) == len(pd.read_csv(tmp_path / "metrics.csv"))

    def test_curves_can_be_disabled(self, tmp_path, tiny_raw):
        """output.curves = false skips the per-fold curves."""
        tiny_raw["output"]["curves"] = False
        cfg = ExperimentConfig(tiny_raw)
        emit_reports(cross_validate(cfg), tmp_path, cfg)
        assert not (tmp_path / "curves").exists()

    def test_manifest(self, tmp_path, tiny_config):
        """The manifest records the config, its hash and the modelling choices."""
        emit_reports(cross_validate(tiny_config), tmp_path, tiny_config)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config_hash"].startswith("sha256:")
        assert manifest["seed"] == 7
        assert manifest["decisions"]["f1_average"] == "macro"
        assert manifest["decisions"]["auc"] == "ovr_macro_rank"
        assert manifest["stats"]["jobs"] == 4
        assert manifest["config_snapshot"] == tiny_config.raw

    def test_rerun_identical_except_timing(self, tmp_path, tiny_config):
        """Two runs of one config write identical files apart from timing and the timestamp."""
        first, second = tmp_path / "a", tmp_path / "b"
        emit_reports(cross_validate(tiny_config), first, tiny_config)
        emit_reports(cross_validate(tiny_config), second, tiny_config)
        for name in ["metrics.csv", "summary.csv", "comparison.csv", "gap.csv", "curves/dsrelu_1.csv"]:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
        manifests = [json.loads((d / "manifest.json").read_text()) for d in (first, second)]
        for manifest in manifests:
            manifest.pop("generated_at")
        assert manifests[0] == manifests[1]

    def test_no_records(self, tmp_path):
        """An empty report is an error."""
        with pytest.raises(ReportError):
            emit_reports(ComparisonReport({"relu": [FoldResult("relu", 0)]}), tmp_path)

    def test_unwritable_directory(self, tmp_path):
        """A file in the way of the output directory is reported."""
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        with pytest.raises(ReportError, match="cannot create output directory"):
            emit_reports(two_activation_report(), blocker / "run")

    def test_manifest_without_config(self):
        """Reports built without a config still get a manifest."""
        manifest = build_manifest(two_activation_report(), None)
        assert manifest["seed"] is None
        assert manifest["stats"]["epochs_run"] == {"dsrelu": [2, 2], "relu": [2, 2]}


class TestEmitKSweep:
    """Tests for the k sweep outputs."""

    def test_layout(self, tmp_path, tiny_config):
        """One directory per k, slope curves and a cross-k summary."""
        emit_k_sweep(k_sweep(tiny_config, [1.0, 5.0]), tmp_path, tiny_config)
        assert (tmp_path / "k_1" / "metrics.csv").exists()
        assert (tmp_path / "k_5" / "manifest.json").exists()
        curves = pd.read_csv(tmp_path / "slope_curves.csv")
        assert sorted(curves.k.unique()) == [1.0, 5.0]
        assert len(curves) == 2 * 101
        summary = pd.read_csv(tmp_path / "ksweep_summary.csv")
        assert list(summary.columns) == ["k", *COMPARISON_COLUMNS]
        assert set(summary.metric) >= {"val_accuracy", "val_f1_macro", "val_auc_macro", "mean_gap"}
