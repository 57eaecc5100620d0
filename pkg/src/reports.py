"""Report writers: metric tables, curves, timing and the run manifest."""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import pandas as pd

from . import __version__
from .activations import slope_curve
from .config import ExperimentConfig, config_hash
from .errors import ReportError
from .models import METRICS, SPLITS, ComparisonReport


logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["activation", "fold", "epoch", "split", "t", "loss", "accuracy", "f1_macro", "auc_macro"]
SUMMARY_COLUMNS = ["metric", "fold", "activation", "value", "is_best"]
COMPARISON_COLUMNS = ["metric", "dsrelu", "best_other", "dsrelu_value", "other_value", "improvement_pct"]
GAP_COLUMNS = ["activation", "fold", "train_accuracy", "val_accuracy", "gap"]
TIMING_COLUMNS = ["activation", "mean_epoch_seconds", "epochs"]
SLOPE_COLUMNS = ["k", "t", "slope", "slope_rate"]


def decisions(cfg: Optional[ExperimentConfig] = None) -> dict[str, Any]:
    """Modelling choices in effect for a run, recorded in the manifest."""
    return {
        "f1_average": "macro",
        "auc": "ovr_macro_rank",
        "init": "kaiming_uniform_fan_in_gain_sqrt2",
        "progress": "t = e / max(1, E-1)",
        "progress_granularity": cfg.progress_granularity if cfg else "epoch",
        "dsrelu_subgradient_at_zero": 1,
        "early_stopping": {"monitor": "val_loss", "min_delta": 0, "restore_best": False},
        "preprocessing": "per_feature_standardize",
        "adam_epsilon": "outside_sqrt",
        "conv_output_extent": "strict|floor-in-residual",
    }


def metrics_frame(report: ComparisonReport) -> pd.DataFrame:
    rows = [
        row
        for folds in report.results.values()
        for fold in folds
        for record in fold.records
        for row in record.metric_rows()
    ]
    return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def summary_frame(report: ComparisonReport) -> pd.DataFrame:
    """Best value over epochs per metric x fold x activation; `is_best` marks each row's maximum."""
    rows = []
    for name in METRICS:
        for split in SPLITS:
            metric = f"{split}_{name}"
            for activation, folds in report.results.items():
                values = [fold.best_value(split, name) for fold in folds]
                for fold, value in zip(folds, values):
                    rows.append({"metric": metric, "fold": str(fold.fold), "activation": activation, "value": value})
                rows.append({
                    "metric": metric,
                    "fold": "mean",
                    "activation": activation,
                    "value": sum(values) / len(values),
                })
    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS[:-1])
    row_max = frame.groupby(["metric", "fold"], sort=False)["value"].transform("max")
    frame["is_best"] = frame["value"] == row_max
    return frame


def comparison_frame(report: ComparisonReport) -> pd.DataFrame:
    return pd.DataFrame(report.improvements(), columns=COMPARISON_COLUMNS)


def gap_frame(report: ComparisonReport) -> pd.DataFrame:
    """Train/validation accuracy at each fold's lowest validation loss."""
    rows = []
    for activation, folds in report.results.items():
        for fold in folds:
            best = fold.best_record
            rows.append({
                "activation": activation,
                "fold": str(fold.fold),
                "train_accuracy": best.train.accuracy,
                "val_accuracy": best.val.accuracy,
                "gap": fold.generalization_gap,
            })
        rows.append({
            "activation": activation,
            "fold": "mean",
            "train_accuracy": sum(f.best_record.train.accuracy for f in folds) / len(folds),
            "val_accuracy": sum(f.best_record.val.accuracy for f in folds) / len(folds),
            "gap": report.mean_gap(activation),
        })
    return pd.DataFrame(rows, columns=GAP_COLUMNS)


def timing_frame(report: ComparisonReport) -> pd.DataFrame:
    rows = [
        {
            "activation": activation,
            "mean_epoch_seconds": report.mean_epoch_seconds(activation),
            "epochs": sum(fold.epochs_run for fold in folds),
        }
        for activation, folds in report.results.items()
    ]
    return pd.DataFrame(rows, columns=TIMING_COLUMNS)


def slope_curves_frame(k_values: list[float], schedules: dict[float, Any], points: int = 101) -> pd.DataFrame:
    rows = [
        {"k": k, "t": t, "slope": s, "slope_rate": rate}
        for k in k_values
        for t, s, rate in slope_curve(schedules[k], points)
    ]
    return pd.DataFrame(rows, columns=SLOPE_COLUMNS)


class ReportWriter:
    """Writes report tables into one output directory."""

    def __init__(self, output_dir: Path, output_format: str = "csv"):
        self.output_dir = Path(output_dir)
        self.output_format = output_format
        self.written: list[Path] = []

    def __enter__(self):
        self._open()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def _open(self) -> None:
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportError(f"cannot create output directory {self.output_dir}: {e}") from e

    def write_table(self, relative: str, frame: pd.DataFrame) -> Path:
        path = self.output_dir / relative
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, lineterminator="\n")
        except OSError as e:
            raise ReportError(f"cannot write {path}: {e}") from e
        self.written.append(path)
        logger.debug("wrote %s (%d rows)", path, len(frame))
        return path

    def write_parquet(self, relative: str, frame: pd.DataFrame) -> Path:
        path = self.output_dir / relative
        try:
            frame.to_parquet(path, engine="pyarrow", index=False)
        except OSError as e:
            raise ReportError(f"cannot write {path}: {e}") from e
        self.written.append(path)
        return path

    def write_json(self, relative: str, payload: dict) -> Path:
        path = self.output_dir / relative
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(payload, f, indent=2, ensure_ascii=False)
        except OSError as e:
            raise ReportError(f"cannot write {path}: {e}") from e
        self.written.append(path)
        return path

    def close(self) -> None:
        logger.info("%d report files in %s", len(self.written), self.output_dir)


def build_manifest(report: ComparisonReport, cfg: Optional[ExperimentConfig]) -> dict[str, Any]:
    raw = cfg.raw if cfg else {}
    return {
        "generator_version": __version__,
        "generated_at": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
        "config_hash": config_hash(raw),
        "seed": cfg.seed if cfg else None,
        "decisions": decisions(cfg),
        "stats": {
            "jobs": sum(len(folds) for folds in report.results.values()),
            "epochs_run": {
                activation: [fold.epochs_run for fold in folds]
                for activation, folds in report.results.items()
            },
        },
        "config_snapshot": raw,
    }


def emit_reports(
    report: ComparisonReport,
    output_dir: Path,
    cfg: Optional[ExperimentConfig] = None,
) -> list[Path]:
    """Write every table of one comparison run into `output_dir`."""
    if not report.results or not any(fold.records for folds in report.results.values() for fold in folds):
        raise ReportError("nothing to report: no epoch records")

    output_format = cfg.output_format if cfg else "csv"
    with ReportWriter(output_dir, output_format) as writer:
        metrics = metrics_frame(report)
        writer.write_table("metrics.csv", metrics)
        if output_format == "both":
            writer.write_parquet("metrics.parquet", metrics)
        writer.write_table("summary.csv", summary_frame(report))
        writer.write_table("comparison.csv", comparison_frame(report))
        writer.write_table("gap.csv", gap_frame(report))
        writer.write_table("timing.csv", timing_frame(report))

        if cfg is None or cfg.write_curves:
            for activation, folds in report.results.items():
                for fold in folds:
                    curve = pd.DataFrame([record.curve_row() for record in fold.records])
                    writer.write_table(f"curves/{activation}_{fold.fold}.csv", curve)

        writer.write_json("manifest.json", build_manifest(report, cfg))
    return writer.written


def _k_dir(k: float) -> str:
    return f"k_{k:g}"


def emit_k_sweep(
    reports: dict[float, ComparisonReport],
    output_dir: Path,
    cfg: ExperimentConfig,
) -> list[Path]:
    """Per-k report directories plus the slope curves and one cross-k summary."""
    written: list[Path] = []
    for k, report in reports.items():
        written.extend(emit_reports(report, Path(output_dir) / _k_dir(k), cfg))

    dsrelu = [a for a in cfg.activations if a.is_dsrelu]
    base = dsrelu[0].schedule if dsrelu else None
    summary_rows = []
    for k, report in reports.items():
        for row in report.improvements():
            summary_rows.append({"k": k, **row})
        for label in report.dsrelu_labels:
            summary_rows.append({
                "k": k,
                "metric": "mean_gap",
                "dsrelu": label,
                "dsrelu_value": report.mean_gap(label),
            })

    with ReportWriter(output_dir, cfg.output_format) as writer:
        if base is not None:
            schedules = {k: base.with_k(k) for k in reports}
            writer.write_table("slope_curves.csv", slope_curves_frame(list(reports), schedules))
        writer.write_table(
            "ksweep_summary.csv",
            pd.DataFrame(summary_rows, columns=["k", *COMPARISON_COLUMNS]),
        )
    return written + writer.written
