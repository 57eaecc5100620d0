"""CLI interface for the activation lab."""

import functools
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from . import __version__
from .config import ExperimentConfig, load_config
from .data import synth_blobs, synth_spirals, write_csv, write_raw_images
from .errors import LabError
from .gradcheck import run_all
from .models import METRICS, ComparisonReport
from .reports import emit_k_sweep, emit_reports
from .training import cross_validate, k_sweep, train_fold
from .validators import validate_config


console = Console()
err_console = Console(stderr=True)


def print_banner():
    """Print application banner."""
    banner = """
╔══════════════════════════════════════════════════════════════════╗
║         DSReLU Lab: dynamic-slope activation experiments         ║
╚══════════════════════════════════════════════════════════════════╝
    """
    console.print(banner, style="bold blue")


def fail(error: LabError, exit_code: int = 1) -> None:
    """Print the machine-readable error line on stderr and exit."""
    payload = {"code": error.code, "message": str(error)}
    click.echo(f"error: {json.dumps(payload, ensure_ascii=False)}", err=True)
    sys.exit(exit_code)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def print_config_summary(config: ExperimentConfig):
    """Print configuration summary."""
    table = Table(title="Experiment Parameters", show_header=False)
    table.add_column("Parameter", style="cyan")
    table.add_column("Value", style="green")

    table.add_row("Name", config.name)
    table.add_row("Seed", str(config.seed))
    table.add_row("Dataset", config.dataset_source)
    table.add_row("Activations", ", ".join(a.label for a in config.activations))
    table.add_row("Folds", str(config.k_folds))
    table.add_row("Max epochs", str(config.max_epochs))
    table.add_row("Patience", str(config.early_stop_patience))
    table.add_row("Batch size", str(config.batch_size))
    table.add_row("Learning rate", f"{config.adam.alpha:g}")
    workers = 1 if config.serial_timing else config.parallel
    table.add_row("Workers", f"{workers}" + (" (serial timing)" if config.serial_timing else ""))

    console.print(table)


def print_validation_errors(errors: list[str]):
    """Print validation errors."""
    console.print("\n[red bold]Configuration Validation Failed:[/red bold]")
    for error in errors:
        console.print(f"  [red]• {error}[/red]")


def print_comparison(report: ComparisonReport, title: str = "Best validation metrics (mean over folds)"):
    table = Table(title=title)
    table.add_column("Activation", style="cyan")
    for name in METRICS:
        table.add_column(name, justify="right")
    table.add_column("gap", justify="right")
    table.add_column("s/epoch", justify="right")

    best = {name: max(report.best_validation(a, name) for a in report.activations) for name in METRICS}
    for activation in report.activations:
        cells = []
        for name in METRICS:
            value = report.best_validation(activation, name)
            cell = f"{value:.4f}"
            cells.append(f"[bold]{cell}[/bold]" if value == best[name] else cell)
        cells.append(f"{report.mean_gap(activation):+.4f}")
        cells.append(f"{report.mean_epoch_seconds(activation):.3f}")
        table.add_row(activation, *cells)
    console.print(table)

    for row in report.improvements():
        if row["improvement_pct"] is None:
            continue
        console.print(
            f"  {row['dsrelu']} vs {row['best_other']} on {row['metric']}: "
            f"{row['improvement_pct']:+.2f}%"
        )


def prepare_config(
    config: Path,
    override: tuple[Path, ...],
    seed: Optional[int],
    parallel: Optional[int],
    serial_timing: bool,
    skip_header: bool,
) -> ExperimentConfig:
    """Load, apply CLI overrides and validate; exits on invalid config."""
    console.print("[CONFIG] Loading configs...", style="bold")
    try:
        config_dict = load_config(config, list(override) if override else None)
    except Exception as e:
        console.print(f"  [red]✗ Failed to load config: {e}[/red]")
        fail(LabError(f"cannot load config {config}: {e}"))
    console.print(f"  ✓ Base: {config}", style="green")
    for ov in override:
        console.print(f"  ✓ Override: {ov}", style="green")

    if seed is not None:
        config_dict.setdefault("experiment", {})["seed"] = seed
    if parallel is not None:
        config_dict.setdefault("training", {})["parallel"] = parallel
    if serial_timing:
        config_dict.setdefault("training", {})["serial_timing"] = True
    if skip_header:
        config_dict.setdefault("dataset", {})["skip_header"] = True

    console.print("\n[VALIDATE] Validating configuration...", style="bold")
    errors = validate_config(config_dict)
    if errors:
        print_validation_errors(errors)
        click.echo(
            "error: " + json.dumps({"code": "config_invalid", "message": "; ".join(errors)}),
            err=True,
        )
        sys.exit(1)
    console.print("  ✓ All validations passed", style="green bold")
    return ExperimentConfig(config_dict)


def resolve_run_dir(cfg: ExperimentConfig, out: Optional[Path]) -> Path:
    if out is not None:
        return out
    run_timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return cfg.output_dir / f"run_{run_timestamp}"


def list_outputs(run_dir: Path) -> None:
    console.print("\n[OUTPUT] Results:", style="bold")
    for file in sorted(run_dir.iterdir()):
        if file.is_dir():
            console.print(f"  ✓ {file.name}/ ({sum(1 for _ in file.iterdir())} files)", style="green")
        else:
            console.print(f"  ✓ {file.name} ({file.stat().st_size:,} bytes)", style="green")


def experiment_options(fn):
    """Options shared by the training subcommands."""
    options = [
        click.option("--config", "-c", type=click.Path(exists=True, path_type=Path),
                     default="configs/default.yaml", help="Base configuration file (YAML, JSON or a run manifest)"),
        click.option("--override", "-o", type=click.Path(exists=True, path_type=Path),
                     multiple=True, help="Override configuration file(s)"),
        click.option("--out", type=click.Path(path_type=Path), default=None,
                     help="Output directory (default: <output_dir>/run_<timestamp>)"),
        click.option("--seed", "-s", type=int, default=None, help="Override random seed"),
        click.option("--parallel", type=int, default=None, help="Fold jobs to run at once"),
        click.option("--serial-timing", is_flag=True, help="Run jobs one at a time for clean epoch timing"),
        click.option("--skip-header", is_flag=True, help="CSV datasets start with a header row"),
        click.option("--verbose", is_flag=True, help="Verbose output"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def run_with_progress(total: int, description: str, job):
    """Run `job(progress_callback)` under a rich progress bar."""
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
    ) as progress:
        task = progress.add_task(f"[cyan]{description}", total=total)

        def progress_callback(done: int, jobs: int, label: str):
            progress.update(task, completed=done, total=jobs, description=f"[cyan]{label} ({done}/{jobs})")

        return job(progress_callback)


def lab_errors(fn):
    """Turn LabError into the error line and exit code 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except LabError as e:
            console.print(f"\n[red bold]✗ {e}[/red bold]")
            fail(e)
    return wrapper


@click.group()
@click.version_option(__version__)
def main():
    """Train and compare networks with the dynamic-slope DSReLU activation.

    Examples:

        python run_experiment.py cv

        python run_experiment.py cv --override configs/overrides/spirals_cv.yaml

        python run_experiment.py train --activation relu --out ./out/relu

        python run_experiment.py ksweep --override configs/overrides/ksweep.yaml

        python run_experiment.py gradcheck
    """


@main.command()
@experiment_options
@click.option("--activation", "-a", default=None, help="Activation label to train (default: first configured)")
@click.option("--fold", type=int, default=0, help="Fold of the k-fold plan to train on")
@lab_errors
def train(config, override, out, seed, parallel, serial_timing, skip_header, verbose, activation, fold):
    """Train one activation on one fold."""
    setup_logging(verbose)
    print_banner()
    cfg = prepare_config(config, override, seed, parallel, serial_timing, skip_header)

    kinds = {kind.label: kind for kind in cfg.activations}
    if activation is not None and activation not in kinds:
        fail(LabError(f"unknown activation {activation!r}; configured: {sorted(kinds)}"))
    kind = kinds[activation] if activation else cfg.activations[0]
    if not 0 <= fold < cfg.k_folds:
        fail(LabError(f"fold {fold} outside [0, {cfg.k_folds})"))

    console.print("\n[PARAMS] Experiment parameters:", style="bold")
    print_config_summary(cfg)

    run_dir = resolve_run_dir(cfg, out)
    console.print(f"\n[TRAIN] {kind.label}, fold {fold}...", style="bold")
    start_time = datetime.now()
    result = train_fold(cfg, fold, activation=kind)
    report = ComparisonReport({kind.label: [result]}, [kind.label] if kind.is_dsrelu else [])
    emit_reports(report, run_dir, cfg)

    best = result.best_record
    console.print(
        f"  best epoch {best.epoch}: val_loss={best.val_loss:.4f} "
        f"val_accuracy={best.val.accuracy:.4f} ({result.epochs_run} epochs"
        + (", stopped early)" if result.stopped_early else ")")
    )
    list_outputs(run_dir)
    console.print(f"\n[DONE] Completed in {datetime.now() - start_time}", style="bold green")
    console.print(f"  Output: {run_dir}/")


@main.command()
@experiment_options
@lab_errors
def cv(config, override, out, seed, parallel, serial_timing, skip_header, verbose):
    """Cross-validated comparison of every configured activation."""
    setup_logging(verbose)
    print_banner()
    cfg = prepare_config(config, override, seed, parallel, serial_timing, skip_header)
    console.print("\n[PARAMS] Experiment parameters:", style="bold")
    print_config_summary(cfg)

    run_dir = resolve_run_dir(cfg, out)
    console.print("\n[CV] Running folds...", style="bold")
    console.print(f"  Output: {run_dir}", style="dim")
    start_time = datetime.now()
    total = len(cfg.activations) * cfg.k_folds
    report = run_with_progress(total, "Training...", lambda cb: cross_validate(cfg, cb))
    emit_reports(report, run_dir, cfg)

    console.print()
    print_comparison(report)
    list_outputs(run_dir)
    console.print(f"\n[DONE] Completed in {datetime.now() - start_time}", style="bold green")
    console.print(f"  Output: {run_dir}/")


@main.command()
@experiment_options
@click.option("--k", "k_values", type=float, multiple=True, help="Steepness values (default: k_sweep.k_values)")
@lab_errors
def ksweep(config, override, out, seed, parallel, serial_timing, skip_header, verbose, k_values):
    """Cross-validate DSReLU for several steepness values k."""
    setup_logging(verbose)
    print_banner()
    cfg = prepare_config(config, override, seed, parallel, serial_timing, skip_header)
    ks = list(k_values) or cfg.k_values
    console.print("\n[PARAMS] Experiment parameters:", style="bold")
    print_config_summary(cfg)

    run_dir = resolve_run_dir(cfg, out)
    console.print(f"\n[KSWEEP] k = {', '.join(f'{k:g}' for k in ks)}", style="bold")
    start_time = datetime.now()
    dsrelu = sum(1 for a in cfg.activations if a.is_dsrelu)
    total = (len(cfg.activations) - dsrelu + dsrelu * len(ks)) * cfg.k_folds
    reports = run_with_progress(total, "Sweeping...", lambda cb: k_sweep(cfg, ks, cb))
    emit_k_sweep(reports, run_dir, cfg)

    for k, report in reports.items():
        console.print()
        print_comparison(report, title=f"k = {k:g}")
    list_outputs(run_dir)
    console.print(f"\n[DONE] Completed in {datetime.now() - start_time}", style="bold green")
    console.print(f"  Output: {run_dir}/")


@main.command()
@click.option("--seed", "-s", type=int, default=0, help="Seed for the random sample points")
@click.option("--verbose", is_flag=True, help="Verbose output")
@lab_errors
def gradcheck(seed, verbose):
    """Finite-difference checks of every op, activation and a toy residual network."""
    setup_logging(verbose)
    print_banner()
    results = run_all(seed)

    table = Table(title="Gradient checks")
    table.add_column("Check", style="cyan")
    table.add_column("Points", justify="right")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Status")
    for result in results:
        status = "[green]ok[/green]" if result.passed else "[red]FAIL[/red]"
        table.add_row(result.name, str(result.points), f"{result.max_error:.2e}", status)
    console.print(table)

    failed = [result for result in results if not result.passed]
    if failed:
        click.echo(
            "error: " + json.dumps({
                "code": "gradcheck_failed",
                "message": ", ".join(result.name for result in failed),
            }),
            err=True,
        )
        sys.exit(2)
    console.print(f"\n[DONE] {len(results)} checks passed", style="bold green")


@main.command("gen-data")
@click.option("--kind", type=click.Choice(["blobs", "spirals"]), default="spirals")
@click.option("--classes", type=int, default=2)
@click.option("--per-class", type=int, default=100)
@click.option("--dim", type=int, default=2, help="Blob dimensionality")
@click.option("--spread", type=float, default=0.3, help="Blob standard deviation")
@click.option("--noise", type=float, default=0.2, help="Spiral angular noise")
@click.option("--seed", "-s", type=int, default=0)
@click.option("--format", "fmt", type=click.Choice(["csv", "raw"]), default="csv")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output file")
@lab_errors
def gen_data(kind, classes, per_class, dim, spread, noise, seed, fmt, out):
    """Write a synthetic dataset to a CSV or DSR1 file."""
    if kind == "blobs":
        dataset = synth_blobs(classes, per_class, dim, spread, seed)
    else:
        dataset = synth_spirals(classes, per_class, noise, seed)

    if fmt == "csv":
        path = write_csv(dataset, out)
    else:
        # DSR1 holds u8 pixels: min-max scale into [0, 1] as 1×1×D images
        features = dataset.features
        low, high = features.min(axis=0), features.max(axis=0)
        scaled = (features - low) / np.where(high > low, high - low, 1.0)
        path = write_raw_images(dataset.with_features(scaled.reshape(dataset.size, 1, 1, -1)), out)
    console.print(f"  ✓ {dataset.name}: {dataset.size} samples -> {path}", style="green")


if __name__ == "__main__":
    main()
