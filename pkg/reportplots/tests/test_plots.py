from pathlib import Path

import pytest

from reportplots import (
    PlotError,
    PlotSpec,
    build_curves_figure,
    build_hist_figure,
    curve_series,
    read_rows,
    render_curves,
    render_hist,
)
from reportplots.cli import main_curves, main_hist

DATA = Path(__file__).parent / "data"
CURVES = DATA / "reference_curves.csv"
HIST = DATA / "reference_hist.csv"

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def spec(metric="mean_label_iou", out="out.png", **kw):
    return PlotSpec(csv_path=CURVES, metric=metric, output=out, **kw)


# --- curves ------------------------------------------------------------------


def test_reference_curves_render_nonempty_png(tmp_path):
    out = render_curves(spec(out=tmp_path / "curves.png"))
    data = out.read_bytes()
    assert data.startswith(PNG_MAGIC)
    assert len(data) > 1000


def test_one_legend_entry_per_strategy_series():
    fig = build_curves_figure(spec())
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert sorted(labels) == [
        "BB4All-FC",
        "BB4All-IC-ALo (α=1)",
        "BB4All-IC-Oo",
        "FbF-BB",
    ]


def test_absent_metrics_leave_a_gap_not_a_zero():
    # the budget-0 rows have no metric value; curves start at the next budget
    fig = build_curves_figure(spec())
    for line in fig.axes[0].lines:
        xs = list(line.get_xdata())
        assert xs == sorted(xs)
        assert 0.0 not in xs
        assert min(xs) > 0


def test_missing_metric_column_lists_available():
    with pytest.raises(PlotError) as exc:
        build_curves_figure(spec(metric="pq"))
    msg = str(exc.value)
    assert "'pq'" in msg
    assert "label_pq" in msg and "mean_label_iou" in msg and "budget_h" in msg


def test_two_strategies_five_budgets_two_entries(tmp_path):
    p = tmp_path / "two.csv"
    lines = ["strategy,alpha,seed,budget_s,budget_h,label_pq"]
    for name in ("A", "B"):
        for k in range(5):
            lines.append(f"{name},,0,{k * 100},{k / 36},0.{k + 1}")
    p.write_text("\n".join(lines) + "\n")
    fig = build_curves_figure(PlotSpec(csv_path=p, metric="label_pq", output="x.png"))
    legend = fig.axes[0].get_legend().get_texts()
    assert [t.get_text() for t in legend] == ["A", "B"]
    assert len(fig.axes[0].lines) == 2


def test_mid_series_gaps_are_skipped(tmp_path):
    p = tmp_path / "gap.csv"
    p.write_text(
        "strategy,alpha,seed,budget_s,budget_h,m\n"
        "A,,0,0,0,0.5\n"
        "A,,0,100,1,\n"
        "A,,0,200,2,0.9\n"
    )
    series = curve_series(read_rows(p)[0], "m", "budget_h")
    assert series == {"A": ([0.0, 2.0], [0.5, 0.9])}


def test_series_sorted_by_x_even_if_file_is_not(tmp_path):
    p = tmp_path / "shuffled.csv"
    p.write_text(
        "strategy,alpha,budget_h,m\nA,,3,0.3\nA,,1,0.1\nA,,2,0.2\n"
    )
    series = curve_series(read_rows(p)[0], "m", "budget_h")
    assert series["A"] == ([1.0, 2.0, 3.0], [0.1, 0.2, 0.3])


def test_all_values_absent_is_an_error(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("strategy,alpha,budget_h,m\nA,,0,\nA,,1,\n")
    with pytest.raises(PlotError) as exc:
        build_curves_figure(PlotSpec(csv_path=p, metric="m", output="x.png"))
    assert "no defined values" in str(exc.value)


def test_svg_output(tmp_path):
    out = render_curves(spec(out=tmp_path / "curves.svg"))
    assert b"<svg" in out.read_bytes()


# --- histogram ---------------------------------------------------------------


def test_reference_hist_renders_nonempty(tmp_path):
    out = render_hist(HIST, tmp_path / "hist.png")
    assert out.read_bytes().startswith(PNG_MAGIC)


def test_one_bar_per_occupied_bin():
    rows, _ = read_rows(HIST)
    occupied = sum(1 for r in rows if int(r["count"]) > 0)
    fig = build_hist_figure(HIST)
    assert len(fig.axes[0].patches) == occupied
    assert occupied < len(rows)  # the reference really does have empty bins


def test_hist_missing_column(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("low,high,count\n0,1,3\n")
    with pytest.raises(PlotError) as exc:
        build_hist_figure(p)
    assert "bin_low" in str(exc.value)


def test_hist_all_bins_empty(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("bin_low,bin_high,count,correct,fraction\n0,0.5,0,0,0\n0.5,1,0,0,0\n")
    with pytest.raises(PlotError):
        build_hist_figure(p)


# --- CLI ---------------------------------------------------------------------


def test_cli_curves_roundtrip(tmp_path, capsys):
    out = tmp_path / "c.png"
    rc = main_curves(["--csv", str(CURVES), "--metric", "label_pq", "-o", str(out)])
    assert rc == 0
    assert out.read_bytes().startswith(PNG_MAGIC)
    assert str(out) in capsys.readouterr().out


def test_cli_curves_bad_metric(tmp_path, capsys):
    rc = main_curves(
        ["--csv", str(CURVES), "--metric", "nope", "-o", str(tmp_path / "c.png")]
    )
    assert rc == 2
    err = capsys.readouterr().err
    assert "available columns" in err and "trainer_quality" in err


def test_cli_curves_missing_file(tmp_path, capsys):
    rc = main_curves(
        ["--csv", str(tmp_path / "absent.csv"), "--metric", "label_pq", "-o", "x.png"]
    )
    assert rc == 3


def test_cli_hist(tmp_path):
    out = tmp_path / "h.png"
    assert main_hist(["--csv", str(HIST), "-o", str(out)]) == 0
    assert out.stat().st_size > 0
