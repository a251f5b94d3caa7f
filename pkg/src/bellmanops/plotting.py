"""Static SVG line charts.

The output is a pure function of the input data (no timestamps, fixed
number formatting), so regenerated plots are byte-identical.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 720, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 30, 55


class PlotDataError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out, t = [], start
    while t <= hi + 1e-12 * abs(step):
        out.append(round(t, 12))
        t += step
    return out


def line_chart_svg(
    x: list[float],
    series: dict[str, list[float]],
    x_label: str = "episode",
    y_label: str = "smoothed average reward",
    title: str = "",
) -> str:
    """Render one ``<polyline>`` per series plus a legend."""
    if not x:
        raise PlotDataError("no data rows to plot")
    if not series:
        raise PlotDataError("no series to plot")
    for name, ys in series.items():
        if len(ys) != len(x):
            raise PlotDataError(f"series {name!r} has {len(ys)} points, expected {len(x)}")
    finite = [v for ys in series.values() for v in ys if math.isfinite(v)]
    if not finite:
        raise PlotDataError("all values are non-finite")
    x_lo, x_hi = min(x), max(x)
    y_lo, y_hi = min(finite), max(finite)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return MARGIN_T + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    x0, y0 = MARGIN_L, MARGIN_T + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<text x="{px(t):.2f}" y="{y0 + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<text x="{x0 - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(x_label)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    for i, (name, ys) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, ys) if math.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN_T + 10 + 18 * i
        lx = WIDTH - MARGIN_R + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 26}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_series_csv(path) -> tuple[list[float], dict[str, list[float]]]:
    """Read ``episode,<series>...`` into an x column and named y columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PlotDataError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2:
        raise PlotDataError(f"{path}: header needs an x column and at least one series, got {header}")
    x, cols = [], {name: [] for name in header[1:]}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise PlotDataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError as exc:
            raise PlotDataError(f"{path}:{lineno}: {exc}") from None
        x.append(vals[0])
        for name, v in zip(header[1:], vals[1:]):
            cols[name].append(v)
    if not x:
        raise PlotDataError(f"{path}: no data rows")
    return x, cols


def emit_plot(aggregate_csv, output_svg, title: str = "") -> Path:
    """Render an aggregate CSV to SVG; nothing is written if the CSV is invalid."""
    x, series = read_series_csv(aggregate_csv)
    svg = line_chart_svg(x, series, title=title)
    out = Path(output_svg)
    out.write_text(svg)
    return out
