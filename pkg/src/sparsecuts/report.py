"""CSV reporting and figure rendering for experiment runs.

Column layouts follow the experiment tables: per-iteration traces carry
``iter, cuts, GC, t_lastlp, t_SDP``; strategy comparisons one row per
(instance, strategy); branch-and-bound rows carry root/final gap-closed
plus the cut-generation breakdown.  Gap-closed values are clamped to 1.0
in reports only.  Figures are rendered to files (SVG by extension) with
the non-interactive matplotlib backend.
"""

from __future__ import annotations

import csv
import math
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .driver import Trace

__all__ = [
    "TRACE_COLUMNS",
    "COMPARE_COLUMNS",
    "BNB_COLUMNS",
    "SUMMARY_COLUMNS",
    "write_trace_csv",
    "compare_row",
    "write_compare_csv",
    "write_bnb_csv",
    "read_csv_rows",
    "summarize_compare",
    "write_summary_csv",
    "progression_figure",
    "summary_figure",
]

TRACE_COLUMNS = ["iter", "cuts", "GC", "t_lastlp", "t_SDP"]
COMPARE_COLUMNS = ["instance", "strategy", "cone", "status", "iter", "cuts", "GC",
                   "t_lastlp", "t_SDP"]
BNB_COLUMNS = ["instance", "variant", "GC_ro", "nodes", "GC", "t", "t_SDP",
               "GC_sdp", "t_cuts", "cuts", "GC_cuts"]
SUMMARY_COLUMNS = ["strategy", "instances", "iter", "cuts", "GC", "t_lastlp"]

TIMING_COLUMNS = {"t_lastlp", "t_SDP", "t", "t_cuts"}


def _fmt_gc(gc: float) -> str:
    if gc is None or not math.isfinite(gc):
        return ""
    return f"{min(gc, 1.0):.6f}"


def _fmt_time(t: float) -> str:
    return f"{t:.4f}" if t is not None and math.isfinite(t) else ""


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace.records:
            writer.writerow(
                [rec.iter, rec.num_cuts, _fmt_gc(rec.gc), _fmt_time(rec.t_lp),
                 _fmt_time(trace.t_sdp)]
            )


def compare_row(trace: Trace) -> dict:
    return {
        "instance": trace.instance,
        "strategy": trace.strategy.variant,
        "cone": trace.cut_mode,
        "status": trace.status,
        "iter": trace.iterations,
        "cuts": trace.num_cuts,
        "GC": _fmt_gc(trace.final_gc),
        "t_lastlp": _fmt_time(trace.t_lastlp),
        "t_SDP": _fmt_time(trace.t_sdp),
    }


def _write_rows(path, columns: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fp:
        writer = csv.DictWriter(fp, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_compare_csv(rows: Iterable[dict], path) -> None:
    _write_rows(path, COMPARE_COLUMNS, rows)


def write_bnb_csv(rows: Iterable[dict], path) -> None:
    _write_rows(path, BNB_COLUMNS, rows)


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fp:
        return list(csv.DictReader(fp))


def summarize_compare(rows: Iterable[dict]) -> list[dict]:
    """Per-strategy averages of iter, cuts, GC and t_lastlp."""
    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row["strategy"], []).append(row)

    def mean(items, key):
        vals = [float(r[key]) for r in items if r.get(key) not in ("", None)]
        return sum(vals) / len(vals) if vals else float("nan")

    out = []
    for strategy in sorted(groups):
        items = groups[strategy]
        out.append(
            {
                "strategy": strategy,
                "instances": len(items),
                "iter": f"{mean(items, 'iter'):.1f}",
                "cuts": f"{mean(items, 'cuts'):.1f}",
                "GC": f"{mean(items, 'GC'):.6f}",
                "t_lastlp": f"{mean(items, 't_lastlp'):.4f}",
            }
        )
    return out


def write_summary_csv(rows: Iterable[dict], path) -> None:
    _write_rows(path, SUMMARY_COLUMNS, rows)


def progression_figure(traces: Sequence[Trace], path) -> None:
    """Gap-closed progression, one line per strategy, dots per iteration."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for trace in traces:
        iters = [rec.iter for rec in trace.records]
        gcs = [min(rec.gc, 1.0) for rec in trace.records]
        ax.plot(iters, gcs, marker=".", linewidth=1.2, label=trace.strategy.variant)
    ax.set_xlabel("iteration")
    ax.set_ylabel("gap closed")
    ax.set_ylim(-0.02, 1.05)
    if traces:
        ax.set_title(traces[0].instance)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def summary_figure(summary_rows: Sequence[dict], path) -> None:
    """Mean gap closed per strategy as a bar chart."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    names = [row["strategy"] for row in summary_rows]
    values = [float(row["GC"]) for row in summary_rows]
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mean gap closed")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
