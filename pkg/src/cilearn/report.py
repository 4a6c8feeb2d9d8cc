"""Result emission: JSONL records, flat plotting tables, and figures.

The table files are deterministic byte-for-byte given identical metrics;
wall-clock timings live only in the JSONL records under a "timing" key.
Figures are rendered from the same per-stream numbers the tables hold.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import StreamMetrics, average_incremental_accuracy


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def stream_records(metrics: StreamMetrics) -> list[dict]:
    """One record per stream plus a final summary record."""
    records = []
    for i in range(metrics.n_streams):
        records.append(
            {
                "stream": i + 1,
                "classes": metrics.task_class_ids[i],
                "curriculum": metrics.curriculum_log[i],
                "selection": metrics.selection_log[i],
                "accuracy_row": metrics.per_task_accuracy[i],
                "overall_accuracy": metrics.overall_accuracy[i],
                "forgetting": metrics.forgetting[i],
                "timing": {"seconds": metrics.stream_seconds[i]},
            }
        )
    summary = {
        "summary": True,
        "streams": metrics.n_streams,
        "class_order": metrics.class_order,
        "average_incremental_accuracy": (
            average_incremental_accuracy(metrics) if metrics.n_streams >= 2 else None
        ),
        "final_forgetting": metrics.forgetting[-1] if metrics.n_streams >= 2 else None,
        "config": metrics.config,
    }
    records.append(summary)
    return records


def write_records(path, metrics: StreamMetrics) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in stream_records(metrics):
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_table(path, metrics: StreamMetrics) -> None:
    """Flat per-stream table: stream, accuracy, forgetting."""
    path = Path(path)
    lines = ["stream,accuracy,forgetting"]
    for i in range(metrics.n_streams):
        lines.append(
            f"{i + 1},{_fmt(metrics.overall_accuracy[i])},{_fmt(metrics.forgetting[i])}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_run_figures(out_dir, metrics: StreamMetrics, prefix: str = "") -> list[Path]:
    out_dir = Path(out_dir)
    streams = list(range(1, metrics.n_streams + 1))
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(streams, metrics.overall_accuracy, marker="o")
    ax.set_xlabel("stream")
    ax.set_ylabel("overall accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_title("Accuracy per stream")
    ax.grid(True, alpha=0.3)
    path = out_dir / f"{prefix}accuracy_per_stream.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    forg_streams = [s for s, f in zip(streams, metrics.forgetting) if f is not None]
    forg_values = [f for f in metrics.forgetting if f is not None]
    if forg_values:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(forg_streams, forg_values, marker="o", color="tab:red")
        ax.set_xlabel("stream")
        ax.set_ylabel("forgetting")
        ax.set_title("Forgetting per stream")
        ax.grid(True, alpha=0.3)
        path = out_dir / f"{prefix}forgetting_per_stream.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def write_run_outputs(out_dir, metrics: StreamMetrics, figures: bool = True) -> dict[str, Path]:
    """Write results.jsonl + table.csv (+ figures) for one run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "results.jsonl"
    table_path = out_dir / "table.csv"
    write_records(records_path, metrics)
    write_table(table_path, metrics)
    outputs = {"records": records_path, "table": table_path}
    if figures:
        for fig_path in render_run_figures(out_dir, metrics):
            outputs[fig_path.stem] = fig_path
    return outputs


def write_ablation_outputs(
    out_dir, results: dict[str, StreamMetrics], figures: bool = True
) -> dict[str, Path]:
    """Per-arm run outputs plus a cross-arm summary table and figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, metrics in results.items():
        write_run_outputs(out_dir / name, metrics, figures=figures)

    lines = ["arm,average_incremental_accuracy,final_forgetting"]
    for name, metrics in results.items():
        avg = average_incremental_accuracy(metrics) if metrics.n_streams >= 2 else None
        final = metrics.forgetting[-1] if metrics.n_streams >= 2 else None
        lines.append(f"{name},{_fmt(avg)},{_fmt(final)}")
    summary_path = out_dir / "ablation_summary.csv"
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs = {"summary": summary_path}

    if figures:
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, metrics in results.items():
            streams = list(range(1, metrics.n_streams + 1))
            ax.plot(streams, metrics.overall_accuracy, marker="o", label=name)
        ax.set_xlabel("stream")
        ax.set_ylabel("overall accuracy")
        ax.set_ylim(0.0, 1.02)
        ax.set_title("Ablation: accuracy per stream")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig_path = out_dir / "ablation_accuracy.png"
        fig.savefig(fig_path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        outputs["figure"] = fig_path
    return outputs


def write_sweep_outputs(
    out_dir, results: dict[float, StreamMetrics], figures: bool = True
) -> dict[str, Path]:
    """Per-epsilon run outputs plus the memory-budget summary and figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for epsilon, metrics in results.items():
        write_run_outputs(out_dir / f"epsilon_{epsilon:g}", metrics, figures=figures)

    lines = ["epsilon,average_incremental_accuracy,final_forgetting"]
    for epsilon in sorted(results):
        metrics = results[epsilon]
        avg = average_incremental_accuracy(metrics) if metrics.n_streams >= 2 else None
        final = metrics.forgetting[-1] if metrics.n_streams >= 2 else None
        lines.append(f"{epsilon:g},{_fmt(avg)},{_fmt(final)}")
    summary_path = out_dir / "memory_sweep.csv"
    summary_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs = {"summary": summary_path}

    if figures:
        epsilons = sorted(results)
        values = [
            average_incremental_accuracy(results[e])
            if results[e].n_streams >= 2
            else results[e].overall_accuracy[-1]
            for e in epsilons
        ]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epsilons, values, marker="s")
        ax.set_xlabel("retained fraction per class")
        ax.set_ylabel("average incremental accuracy")
        ax.set_title("Memory budget sweep")
        ax.grid(True, alpha=0.3)
        fig_path = out_dir / "memory_sweep.png"
        fig.savefig(fig_path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        outputs["figure"] = fig_path
    return outputs
