"""Benchmark report output: delimited rows plus a rendered timing figure."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

BENCH_COLUMNS = ["query", "policy", "t_r", "t_e", "count"]


def write_bench_csv(rows: Iterable[dict], out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "bench.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in BENCH_COLUMNS})
    return path


def write_bench_figure(rows: list[dict], out_dir: Path) -> Path:
    """Grouped bars of rewriting and evaluation time per query, one figure
    file next to the CSV."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "bench.png"
    labels = [f"{r['query']}\n[{r['policy']}]" for r in rows]
    t_r = [float(r["t_r"]) for r in rows]
    t_e = [float(r["t_e"]) for r in rows]
    xs = range(len(rows))
    width = 0.38

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(rows)), 4.0))
    ax.bar([x - width / 2 for x in xs], t_r, width, label="rewrite (ms)")
    ax.bar([x + width / 2 for x in xs], t_e, width, label="evaluate (ms)")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("milliseconds")
    ax.set_title("query answering time breakdown")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
