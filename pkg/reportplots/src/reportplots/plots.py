"""Turn campaign CSV files into figures.

Everything here is a pure CSV-to-image transform: values are read, grouped,
and drawn, never recomputed. Curves come from the simulator's quality-vs-time
CSV (one line per strategy series); histograms from the evaluator's
correctness-by-overlap CSV (one bar per occupied bin).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


class PlotError(Exception):
    """Bad or unusable plotting input."""


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: which CSV, which metric column, where to save."""

    csv_path: str | Path
    metric: str
    output: str | Path
    x_column: str = "budget_h"
    title: str | None = None


def read_rows(csv_path: str | Path) -> tuple[list[dict[str, str]], list[str]]:
    """Load a CSV as dict rows plus its column names, in file order."""
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotError(f"{csv_path}: empty file, no header row")
        rows = list(reader)
    return rows, list(reader.fieldnames)


def _require_column(name: str, columns: list[str], csv_path: str | Path) -> None:
    if name not in columns:
        raise PlotError(
            f"{csv_path}: no column {name!r}; available columns: {', '.join(columns)}"
        )


def series_label(row: dict[str, str]) -> str:
    """One legend label per strategy series; alpha variants stay distinct."""
    strategy = row.get("strategy", "")
    alpha = row.get("alpha", "")
    return f"{strategy} (α={alpha})" if alpha else strategy


def curve_series(
    rows: list[dict[str, str]], metric: str, x_column: str
) -> dict[str, tuple[list[float], list[float]]]:
    """Group rows into per-strategy (x, y) series.

    Rows whose metric field is empty are skipped entirely — an undefined
    metric (e.g. nothing labeled yet) is a gap, not a zero — so each curve
    starts at its first defined point.
    """
    series: dict[str, tuple[list[float], list[float]]] = {}
    for row in rows:
        value = row.get(metric, "")
        if value == "":
            continue
        xs, ys = series.setdefault(series_label(row), ([], []))
        xs.append(float(row[x_column]))
        ys.append(float(value))
    for xs, ys in series.values():
        order = sorted(range(len(xs)), key=xs.__getitem__)
        xs[:] = [xs[i] for i in order]
        ys[:] = [ys[i] for i in order]
    return series


_X_LABELS = {"budget_h": "annotation budget (h)", "budget_s": "annotation budget (s)"}


def build_curves_figure(spec: PlotSpec) -> "plt.Figure":
    rows, columns = read_rows(spec.csv_path)
    _require_column(spec.metric, columns, spec.csv_path)
    _require_column(spec.x_column, columns, spec.csv_path)
    series = curve_series(rows, spec.metric, spec.x_column)
    if not series:
        raise PlotError(
            f"{spec.csv_path}: column {spec.metric!r} has no defined values to plot"
        )
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label in sorted(series):
        xs, ys = series[label]
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel(_X_LABELS.get(spec.x_column, spec.x_column))
    ax.set_ylabel(spec.metric)
    ax.set_title(spec.title or f"{spec.metric} vs. annotation time")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def render_curves(spec: PlotSpec) -> Path:
    """Draw one line per strategy from a campaign curves CSV; returns the file."""
    fig = build_curves_figure(spec)
    out = Path(spec.output)
    try:
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out


def build_hist_figure(csv_path: str | Path, title: str | None = None) -> "plt.Figure":
    rows, columns = read_rows(csv_path)
    for name in ("bin_low", "bin_high", "count", "fraction"):
        _require_column(name, columns, csv_path)
    occupied = [row for row in rows if int(row["count"]) > 0]
    if not occupied:
        raise PlotError(f"{csv_path}: every bin is empty, nothing to draw")
    lows = [float(r["bin_low"]) for r in occupied]
    highs = [float(r["bin_high"]) for r in occupied]
    fractions = [float(r["fraction"]) for r in occupied]
    centers = [(lo + hi) / 2 for lo, hi in zip(lows, highs)]
    widths = [(hi - lo) * 0.9 for lo, hi in zip(lows, highs)]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    bars = ax.bar(centers, fractions, width=widths, edgecolor="black", linewidth=0.5)
    for bar, row in zip(bars, occupied):
        ax.annotate(
            row["count"],
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_xlabel("bounding-box overlap")
    ax.set_ylabel("fraction of correct labels")
    ax.set_ylim(0, 1.1)
    ax.set_title(title or "label correctness by overlap")
    fig.tight_layout()
    return fig


def render_hist(csv_path: str | Path, output: str | Path, title: str | None = None) -> Path:
    """Bar chart of the correctness histogram, one bar per occupied bin."""
    fig = build_hist_figure(csv_path, title)
    out = Path(output)
    try:
        fig.savefig(out)
    finally:
        plt.close(fig)
    return out
