"""Records produced by training runs."""

from dataclasses import dataclass, field
from typing import Optional

from .errors import TrainingError
from .metrics import MetricRecord


METRICS = ("accuracy", "f1_macro", "auc_macro")
SPLITS = ("train", "val")


def improvement(best_dsrelu: float, best_other: float) -> float:
    """Relative improvement in percent: (dsrelu - other) / other * 100."""
    if not best_other > 0:
        raise TrainingError(f"improvement needs a positive baseline value, got {best_other}")
    return (best_dsrelu - best_other) / best_other * 100.0


@dataclass
class EpochRecord:
    """Metrics of one epoch of one fold."""
    activation: str
    fold: int
    epoch: int
    t: float
    slope: Optional[float]
    train_loss: float
    val_loss: float
    train: MetricRecord
    val: MetricRecord
    wall_seconds: float

    def split_metrics(self, split: str) -> MetricRecord:
        return self.train if split == "train" else self.val

    def metric(self, split: str, name: str) -> float:
        return getattr(self.split_metrics(split), name)

    def metric_rows(self) -> list[dict]:
        """Two metrics.csv rows (train, val). Timing is excluded so the file is reproducible."""
        rows = []
        for split, loss in (("train", self.train_loss), ("val", self.val_loss)):
            row = {"activation": self.activation}
            row.update(self.split_metrics(split).to_row(self.fold, self.epoch, split))
            row["t"] = self.t
            row["loss"] = loss
            rows.append(row)
        return rows

    def curve_row(self) -> dict:
        row = {
            "epoch": self.epoch,
            "t": self.t,
            "slope": self.slope,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
        }
        for name in METRICS:
            for split in SPLITS:
                row[f"{split}_{name}"] = self.metric(split, name)
        return row


@dataclass
class FoldResult:
    """History of one activation on one fold."""
    activation: str
    fold: int
    records: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    @property
    def best_record(self) -> EpochRecord:
        """Epoch with the lowest validation loss (the early-stopping monitor)."""
        return min(self.records, key=lambda record: (record.val_loss, record.epoch))

    def best_value(self, split: str, name: str) -> float:
        """Best (maximum) value of a metric over all epochs."""
        return max(record.metric(split, name) for record in self.records)

    @property
    def mean_epoch_seconds(self) -> float:
        return sum(r.wall_seconds for r in self.records) / max(1, len(self.records))

    @property
    def generalization_gap(self) -> float:
        """Train minus validation accuracy at the best epoch."""
        best = self.best_record
        return best.train.accuracy - best.val.accuracy


@dataclass
class ComparisonReport:
    """Cross-validated results of every activation, keyed by activation label."""
    results: dict[str, list[FoldResult]]
    dsrelu_labels: list[str] = field(default_factory=list)

    @property
    def activations(self) -> list[str]:
        return list(self.results)

    def best_validation(self, activation: str, name: str) -> float:
        """Mean over folds of the best validation value of `name`."""
        folds = self.results[activation]
        return sum(fold.best_value("val", name) for fold in folds) / len(folds)

    def best_other(self, name: str) -> Optional[str]:
        others = [a for a in self.activations if a not in self.dsrelu_labels]
        if not others:
            return None
        return max(others, key=lambda a: self.best_validation(a, name))

    def improvements(self) -> list[dict]:
        """Improvement % of every DSReLU entry over the best non-DSReLU activation, per metric."""
        rows = []
        for name in METRICS:
            other = self.best_other(name)
            if other is None:
                continue
            other_value = self.best_validation(other, name)
            for dsrelu in self.dsrelu_labels:
                dsrelu_value = self.best_validation(dsrelu, name)
                rows.append({
                    "metric": f"val_{name}",
                    "dsrelu": dsrelu,
                    "best_other": other,
                    "dsrelu_value": dsrelu_value,
                    "other_value": other_value,
                    "improvement_pct": improvement(dsrelu_value, other_value) if other_value > 0 else None,
                })
        return rows

    def mean_epoch_seconds(self, activation: str) -> float:
        folds = self.results[activation]
        total = sum(r.wall_seconds for fold in folds for r in fold.records)
        count = sum(fold.epochs_run for fold in folds)
        return total / max(1, count)

    def mean_gap(self, activation: str) -> float:
        folds = self.results[activation]
        return sum(fold.generalization_gap for fold in folds) / len(folds)
