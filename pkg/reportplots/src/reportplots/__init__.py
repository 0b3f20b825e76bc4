"""Figures from annotation-campaign CSV files (curves and histograms)."""

from .plots import (
    PlotError,
    PlotSpec,
    build_curves_figure,
    build_hist_figure,
    curve_series,
    read_rows,
    render_curves,
    render_hist,
    series_label,
)

__version__ = "0.1.0"

__all__ = [
    "PlotError",
    "PlotSpec",
    "build_curves_figure",
    "build_hist_figure",
    "curve_series",
    "read_rows",
    "render_curves",
    "render_hist",
    "series_label",
    "__version__",
]
