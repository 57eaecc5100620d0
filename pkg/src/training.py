"""Experiment driver: per-fold training, cross-validation and the k sweep."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .activations import ActivationKind, TrainingProgress
from .config import ExperimentConfig
from .data import Dataset, FoldPlan, batches, kfold, standardize
from .errors import NonFiniteError, TrainingError
from .metrics import EvalBatch, MetricRecord, evaluate
from .models import ComparisonReport, EpochRecord, FoldResult, improvement
from .network import Network, build
from .optim import Adam, cross_entropy
from .tensor import Graph, Mode, Tensor


logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int, str], None]

__all__ = [
    "EarlyStopping",
    "cross_validate",
    "evaluate_split",
    "fold_seed",
    "improvement",
    "k_sweep",
    "prepare_fold",
    "train_fold",
]


@dataclass
class EarlyStopping:
    """Stops after `patience` consecutive epochs without a strictly lower monitored value."""
    patience: int
    best: float = math.inf
    bad_epochs: int = 0

    def update(self, value: float) -> bool:
        """Record one epoch; True means stop now."""
        if value < self.best:
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def fold_seed(seed: int, fold: int) -> int:
    return seed ^ fold


def prepare_fold(dataset: Dataset, plan: FoldPlan, fold: int) -> tuple[Dataset, Dataset]:
    """Standardized (train, validation) split of `fold`."""
    train_idx, val_idx = plan.split(fold)
    train, val = standardize(
        dataset.subset(train_idx, f"{dataset.name}_train{fold}"),
        dataset.subset(val_idx, f"{dataset.name}_val{fold}"),
    )
    return train, val


def evaluate_split(net: Network, dataset: Dataset, batch_size: int) -> tuple[float, MetricRecord]:
    """Mean cross-entropy and metrics over a whole split, in inference mode."""
    logits = np.concatenate([
        net.forward(dataset.features[start:start + batch_size], Mode.INFERENCE).data
        for start in range(0, dataset.size, batch_size)
    ])
    loss = cross_entropy(Tensor(logits), dataset.labels).item()
    return loss, evaluate(EvalBatch.from_logits(logits, dataset.labels))


def _progress_at_batch(epoch: int, batch_index: int, batches_per_epoch: int, max_epochs: int) -> TrainingProgress:
    step = epoch * batches_per_epoch + batch_index
    return TrainingProgress(step / max(1, max_epochs * batches_per_epoch - 1))


def train_fold(
    cfg: ExperimentConfig,
    fold_index: int,
    activation: Optional[ActivationKind] = None,
    dataset: Optional[Dataset] = None,
    plan: Optional[FoldPlan] = None,
) -> FoldResult:
    """Train one activation on one fold and return its per-epoch history.

    The progress t of epoch e is e / max(1, E - 1) for the configured E, also
    when early stopping ends the fold before E.
    """
    activation = activation or cfg.activations[0]
    if dataset is None:
        dataset = cfg.load_dataset()
    if plan is None:
        plan = kfold(dataset, cfg.k_folds, cfg.seed)
    train, val = prepare_fold(dataset, plan, fold_index)

    seed = fold_seed(cfg.seed, fold_index)
    net = build(cfg.network_spec(activation, seed))
    optimizer = Adam(net.named_parameters(), cfg.adam)
    stopper = EarlyStopping(cfg.early_stop_patience)
    max_epochs = cfg.max_epochs
    per_batch = cfg.progress_granularity == "batch"
    batches_per_epoch = math.ceil(train.size / cfg.batch_size)
    result = FoldResult(activation=activation.label, fold=fold_index)

    for epoch in range(max_epochs):
        started = time.perf_counter()
        if not per_batch:
            net.set_progress(TrainingProgress.at_epoch(epoch, max_epochs))
        epoch_t = None

        for batch_index, (x, y) in enumerate(batches(train, cfg.batch_size, seed, epoch)):
            if per_batch:
                net.set_progress(_progress_at_batch(epoch, batch_index, batches_per_epoch, max_epochs))
            if epoch_t is None:
                epoch_t = net.progress.t
            optimizer.zero_grad()
            try:
                with Graph() as graph:
                    loss = cross_entropy(net.forward(x, Mode.TRAINING), y)
                    graph.backward(loss)
                optimizer.step()
            except NonFiniteError as e:
                raise TrainingError(
                    f"{activation.label}: fold {fold_index} aborted at epoch {epoch}, "
                    f"batch {batch_index}: {e}"
                ) from e

        train_loss, train_metrics = evaluate_split(net, train, cfg.eval_batch_size)
        val_loss, val_metrics = evaluate_split(net, val, cfg.eval_batch_size)
        record = EpochRecord(
            activation=activation.label,
            fold=fold_index,
            epoch=epoch,
            t=net.progress.t if epoch_t is None else epoch_t,
            slope=net.current_slope,
            train_loss=train_loss,
            val_loss=val_loss,
            train=train_metrics,
            val=val_metrics,
            wall_seconds=time.perf_counter() - started,
        )
        result.records.append(record)
        logger.debug(
            "%s fold %d epoch %d: t=%.3f train_loss=%.4f val_loss=%.4f val_acc=%.4f (%.2fs)",
            activation.label, fold_index, epoch, record.t, train_loss, val_loss,
            val_metrics.accuracy, record.wall_seconds,
        )

        if stopper.update(val_loss):
            result.stopped_early = epoch + 1 < max_epochs
            logger.info(
                "%s fold %d: early stop after epoch %d (best val_loss %.4f)",
                activation.label, fold_index, epoch, stopper.best,
            )
            break

    return result


def _run_job(
    raw_config: dict,
    activation: dict,
    fold: int,
    dataset: Dataset,
    plan: FoldPlan,
) -> FoldResult:
    """Process-pool entry point: everything it needs arrives pickled."""
    return train_fold(
        ExperimentConfig(raw_config),
        fold,
        activation=ActivationKind.from_dict(activation),
        dataset=dataset,
        plan=plan,
    )


def _run_jobs(
    cfg: ExperimentConfig,
    activations: list[ActivationKind],
    dataset: Dataset,
    plan: FoldPlan,
    progress_callback: Optional[ProgressCallback],
) -> dict[str, list[FoldResult]]:
    jobs = [(activation, fold) for activation in activations for fold in range(plan.k)]
    finished: dict[tuple[str, int], FoldResult] = {}

    def report(result: FoldResult) -> None:
        finished[(result.activation, result.fold)] = result
        if progress_callback:
            progress_callback(len(finished), len(jobs), f"{result.activation} fold {result.fold}")

    workers = 1 if cfg.serial_timing else cfg.parallel
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_job, cfg.raw, activation.to_dict(), fold, dataset, plan)
                for activation, fold in jobs
            ]
            for future in as_completed(futures):
                report(future.result())
    else:
        for activation, fold in jobs:
            report(train_fold(cfg, fold, activation=activation, dataset=dataset, plan=plan))

    return {
        activation.label: [finished[(activation.label, fold)] for fold in range(plan.k)]
        for activation in activations
    }


def _check_dataset(cfg: ExperimentConfig, dataset: Dataset) -> None:
    if dataset.class_count > cfg.num_classes:
        raise TrainingError(
            f"dataset has {dataset.class_count} classes but the network predicts {cfg.num_classes}"
        )


def cross_validate(
    cfg: ExperimentConfig,
    progress_callback: Optional[ProgressCallback] = None,
    dataset: Optional[Dataset] = None,
) -> ComparisonReport:
    """Run every configured activation on every fold of one shared stratified plan."""
    if dataset is None:
        dataset = cfg.load_dataset()
    _check_dataset(cfg, dataset)
    plan = kfold(dataset, cfg.k_folds, cfg.seed)
    activations = cfg.activations
    results = _run_jobs(cfg, activations, dataset, plan, progress_callback)
    return ComparisonReport(
        results=results,
        dsrelu_labels=[a.label for a in activations if a.is_dsrelu],
    )


def _with_k(activation: ActivationKind, k: float) -> ActivationKind:
    return ActivationKind.dsrelu(activation.schedule.with_k(k), name=activation.name)


def k_sweep(
    cfg: ExperimentConfig,
    k_values: list[float],
    progress_callback: Optional[ProgressCallback] = None,
    dataset: Optional[Dataset] = None,
) -> dict[float, ComparisonReport]:
    """Cross-validate the DSReLU entries once per steepness k.

    Baselines do not depend on k, so they are trained once and shared by every
    per-k report.
    """
    if not k_values or any(not k > 0 for k in k_values):
        raise TrainingError(f"k values must be positive, got {k_values}")
    if dataset is None:
        dataset = cfg.load_dataset()
    _check_dataset(cfg, dataset)
    plan = kfold(dataset, cfg.k_folds, cfg.seed)
    activations = cfg.activations
    baselines = [a for a in activations if not a.is_dsrelu]
    baseline_results = _run_jobs(cfg, baselines, dataset, plan, progress_callback) if baselines else {}

    reports: dict[float, ComparisonReport] = {}
    for k in k_values:
        swept = [_with_k(a, k) if a.is_dsrelu else a for a in activations]
        dsrelu_results = _run_jobs(cfg, [a for a in swept if a.is_dsrelu], dataset, plan, progress_callback)
        merged = {**baseline_results, **dsrelu_results}
        reports[k] = ComparisonReport(
            results={a.label: merged[a.label] for a in swept},
            dsrelu_labels=[a.label for a in swept if a.is_dsrelu],
        )
    return reports
