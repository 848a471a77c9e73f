"""Post-run reporting: a text summary rebuilt from the persisted files,
plus rendered figures.

The summary is recomputed from results.jsonl, decisions.jsonl, metrics.csv,
and run.json (never read back from summary.json), so this doubles as an
integrity check of the persisted run.  Figures land in ``figures/`` next to
the delimited output.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import StorageError
from .experiment import METRICS_FILENAME, rebuild_summary

logger = logging.getLogger(__name__)

FIGURES_DIRNAME = "figures"


def load_metrics_rows(out_dir: str | Path) -> list[dict]:
    path = Path(out_dir) / METRICS_FILENAME
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def format_summary(summary: dict) -> str:
    best = summary["best"]
    genome = ", ".join(f"{v:.6g}" for v in best["genome"])
    lines = [
        f"run          {summary['run_id']}",
        f"problem      {summary['problem']}",
        f"workers      {summary['workers']}",
        f"population   {summary['population_size']}",
        f"generations  {summary['generations']}",
        f"sim time     {summary['total_sim_time_ms']} ms",
        f"speedup      {summary['speedup_vs_one_worker']:.3f}x vs one worker",
        f"decisions    {summary['decisions_logged']}",
        f"records      {summary['records_written']}",
        f"best fitness {best['fitness']:.6g}"
        + ("" if best["feasible"] else f" (infeasible, violation {best['violation']:.6g})"),
        f"best genome  [{genome}]",
    ]
    return "\n".join(lines)


def render_figures(out_dir: str | Path, rows: list[dict]) -> list[Path]:
    """Render convergence and load figures; add speedup when bench.csv exists."""
    out_dir = Path(out_dir)
    fig_dir = out_dir / FIGURES_DIRNAME
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []

    generations = [int(r["generation"]) for r in rows]
    best = [float(r["best_fitness"]) for r in rows]
    mean = [float(r["mean_fitness"]) for r in rows]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(generations, best, label="best fitness")
    ax.plot(generations, mean, label="mean fitness", alpha=0.7)
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness")
    ax.set_title("Convergence")
    if min(best) > 0 and max(mean) / max(min(best), 1e-300) > 1e3:
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    path = fig_dir / "convergence.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    makespan = [int(r["makespan_ms"]) for r in rows]
    reassigned = [int(r["jobs_reassigned"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5.5), sharex=True)
    ax1.plot(generations, makespan)
    ax1.set_ylabel("makespan (ms)")
    ax1.set_title("Per-generation load")
    ax2.bar(generations, reassigned, width=0.8)
    ax2.set_ylabel("jobs reassigned")
    ax2.set_xlabel("generation")
    fig.tight_layout()
    path = fig_dir / "load.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    bench_path = out_dir / "bench.csv"
    if bench_path.exists():
        with open(bench_path, encoding="utf-8", newline="") as fh:
            bench_rows = list(csv.DictReader(fh))
        workers = [int(r["workers"]) for r in bench_rows]
        speedup = [float(r["speedup_vs_one_worker"]) for r in bench_rows]
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.plot(workers, speedup, marker="o", label="measured")
        ax.plot(workers, workers, linestyle="--", alpha=0.5, label="ideal")
        ax.set_xlabel("workers")
        ax.set_ylabel("speedup vs one worker")
        ax.set_title("Scaling")
        ax.legend()
        fig.tight_layout()
        path = fig_dir / "speedup.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(path)

    return written


def report(out_dir: str | Path, figures: bool = True) -> str:
    """Rebuild the summary from files, optionally render figures, and return
    the printable report text."""
    out_dir = Path(out_dir)
    summary = rebuild_summary(out_dir)
    text = format_summary(summary)
    if figures:
        rows = load_metrics_rows(out_dir)
        for path in render_figures(out_dir, rows):
            text += f"\nwrote {path}"
    return text


def write_summary_check(out_dir: str | Path) -> bool:
    """True iff the stored summary.json matches the rebuilt one."""
    out_dir = Path(out_dir)
    stored = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
    return stored == rebuild_summary(out_dir)
