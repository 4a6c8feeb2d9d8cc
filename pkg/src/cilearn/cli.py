"""Command line interface.

Subcommands: run a configured stream, run the component ablation grid,
sweep the per-class memory budget, and generate a synthetic dataset file.
Reports land in the output directory as JSONL records, flat CSV tables,
and PNG figures (suppress figures with --no-figures).
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import click

from .config import load_config, save_config
from .data import synthesize, write_dataset_file
from .harness import (
    average_incremental_accuracy,
    run as run_pipeline,
    run_ablation,
    run_memory_sweep,
)
from .report import (
    write_ablation_outputs,
    write_run_outputs,
    write_sweep_outputs,
)


@click.group()
def main():
    """Class-incremental learning benchmark harness."""


def _load(config_path: Path, seed: int | None):
    config = load_config(config_path)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def _echo_summary(metrics) -> None:
    for i, acc in enumerate(metrics.overall_accuracy):
        forg = metrics.forgetting[i]
        forg_text = f"  forgetting {forg:.4f}" if forg is not None else ""
        click.echo(f"stream {i + 1}: accuracy {acc:.4f}{forg_text}")
    if metrics.n_streams >= 2:
        click.echo(
            f"average incremental accuracy: "
            f"{average_incremental_accuracy(metrics):.4f}"
        )


@main.command("run")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="results")
@click.option("--no-figures", is_flag=True, help="Skip PNG rendering.")
def run_command(config_path, seed, out_dir, no_figures):
    """Run one configured stream and write its reports."""
    config = _load(Path(config_path), seed)
    metrics, _ = run_pipeline(config)
    out = Path(out_dir)
    outputs = write_run_outputs(out, metrics, figures=not no_figures)
    save_config(out / "config_used.txt", config)
    _echo_summary(metrics)
    click.echo(f"wrote {outputs['records']} and {outputs['table']}")


@main.command("ablate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--grid", default="curriculum,iss", show_default=True,
              help="Comma list of components to toggle (curriculum, iss).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="ablation")
@click.option("--no-figures", is_flag=True)
def ablate_command(config_path, grid, seed, out_dir, no_figures):
    """Run every on/off combination of the requested components."""
    config = _load(Path(config_path), seed)
    flags = tuple(part.strip() for part in grid.split(",") if part.strip())
    if not flags:
        raise click.BadParameter("grid must name at least one component")
    results = run_ablation(config, flags)
    outputs = write_ablation_outputs(Path(out_dir), results, figures=not no_figures)
    for name, metrics in results.items():
        avg = (
            f"{average_incremental_accuracy(metrics):.4f}"
            if metrics.n_streams >= 2
            else "n/a"
        )
        click.echo(f"{name}: average incremental accuracy {avg}")
    click.echo(f"wrote {outputs['summary']}")


@main.command("sweep-memory")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--epsilons", default="0.05,0.10,0.15,0.20,0.25,0.30", show_default=True,
              help="Comma list of retained fractions per class.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="memory_sweep")
@click.option("--no-figures", is_flag=True)
def sweep_memory_command(config_path, epsilons, seed, out_dir, no_figures):
    """Re-run the stream across a range of per-class memory budgets."""
    config = _load(Path(config_path), seed)
    try:
        values = [float(part) for part in epsilons.split(",") if part.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse epsilons: {exc}") from exc
    if not values:
        raise click.BadParameter("epsilons must contain at least one value")
    results = run_memory_sweep(config, values)
    outputs = write_sweep_outputs(Path(out_dir), results, figures=not no_figures)
    for epsilon in sorted(results):
        metrics = results[epsilon]
        avg = (
            f"{average_incremental_accuracy(metrics):.4f}"
            if metrics.n_streams >= 2
            else "n/a"
        )
        click.echo(f"epsilon {epsilon:g}: average incremental accuracy {avg}")
    click.echo(f"wrote {outputs['summary']}")


@main.command("synth")
@click.option("--classes", type=int, required=True)
@click.option("--dim", type=int, required=True)
@click.option("--separation", type=float, required=True)
@click.option("--samples", type=int, default=100, show_default=True,
              help="Samples per class.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def synth_command(classes, dim, separation, samples, seed, out_path):
    """Generate a synthetic Gaussian-blob dataset file."""
    batch = synthesize(classes, samples, dim, separation, seed)
    write_dataset_file(Path(out_path), batch)
    click.echo(f"wrote {batch.n} samples ({classes} classes, dim {dim}) to {out_path}")


if __name__ == "__main__":
    main()
