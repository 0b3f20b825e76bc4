"""Command-line entry points: ``plot_curves`` and ``plot_hist``."""

from __future__ import annotations

import argparse
import sys

from .plots import PlotError, PlotSpec, render_curves, render_hist


def main_curves(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_curves",
        description="Plot per-strategy quality curves from a campaign CSV.",
    )
    parser.add_argument("--csv", required=True, metavar="FILE")
    parser.add_argument("--metric", required=True, metavar="COL", help="y-axis column")
    parser.add_argument(
        "--x", default="budget_h", metavar="COL", help="x-axis column (default budget_h)"
    )
    parser.add_argument("--title", default=None)
    parser.add_argument("-o", "--output", required=True, metavar="FILE", help="png/svg/pdf")
    args = parser.parse_args(argv)
    spec = PlotSpec(
        csv_path=args.csv,
        metric=args.metric,
        output=args.output,
        x_column=args.x,
        title=args.title,
    )
    return _run(lambda: render_curves(spec))


def main_hist(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot_hist",
        description="Plot a correctness-by-overlap histogram CSV as a bar chart.",
    )
    parser.add_argument("--csv", required=True, metavar="FILE")
    parser.add_argument("--title", default=None)
    parser.add_argument("-o", "--output", required=True, metavar="FILE", help="png/svg/pdf")
    args = parser.parse_args(argv)
    return _run(lambda: render_hist(args.csv, args.output, args.title))


def _run(draw) -> int:
    try:
        out = draw()
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main_curves())
