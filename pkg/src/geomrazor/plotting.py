"""Minimal standalone SVG line/marker plots of CSV columns.

Output is byte-deterministic: coordinates are written with two decimals and
nothing depends on time, locale or dict ordering.
"""

from __future__ import annotations

import csv
import math
from html import escape
from pathlib import Path
from typing import Sequence

WIDTH, HEIGHT = 640, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 20, 30, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
N_TICKS = 5


def read_columns(csv_path, columns: Sequence[str]) -> dict[str, list[float | None]]:
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"{csv_path}: missing column(s) {missing}; available: {header}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{csv_path}: no data rows")
    out: dict[str, list[float | None]] = {c: [] for c in columns}
    for row in rows:
        for c in columns:
            v = row[c].strip()
            if v.lower() in ("true", "false"):
                out[c].append(1.0 if v.lower() == "true" else 0.0)
            else:
                out[c].append(float(v) if v else None)
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


def _span(vals: list[float], log: bool) -> tuple[float, float]:
    if log:
        vals = [math.log10(v) for v in vals]
    lo, hi = min(vals), max(vals)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(x: list[float | None], series: dict[str, list[float | None]], x_label: str,
               logx: bool = False, logy: bool = False, title: str | None = None) -> str:
    pts = {name: [(a, b) for a, b in zip(x, ys) if a is not None and b is not None
                  and (not logx or a > 0) and (not logy or b > 0)]
           for name, ys in series.items()}
    all_x = [a for p in pts.values() for a, _ in p]
    all_y = [b for p in pts.values() for _, b in p]
    if not all_x:
        raise ValueError("nothing to plot: every selected cell is empty or non-positive on a log axis")
    x0, x1 = _span(all_x, logx)
    y0, y1 = _span(all_y, logy)
    pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def sx(v):
        v = math.log10(v) if logx else v
        return MARGIN_LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        v = math.log10(v) if logy else v
        return MARGIN_TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    bx, by = MARGIN_LEFT, MARGIN_TOP + ph
    out.append(f'<line class="axis" x1="{bx}" y1="{by}" x2="{bx + pw}" y2="{by}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{bx}" y1="{MARGIN_TOP}" x2="{bx}" y2="{by}" stroke="black"/>')
    for k in range(N_TICKS):
        t = k / (N_TICKS - 1)
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        px, py = bx + t * pw, by - t * ph
        xl = 10 ** xv if logx else xv
        yl = 10 ** yv if logy else yv
        out.append(f'<line x1="{_fmt(px)}" y1="{by}" x2="{_fmt(px)}" y2="{by + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px)}" y="{by + 16}" text-anchor="middle">{_tick_label(xl)}</text>')
        out.append(f'<line x1="{bx - 4}" y1="{_fmt(py)}" x2="{bx}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(f'<text x="{bx - 6}" y="{_fmt(py + 4)}" text-anchor="end">{_tick_label(yl)}</text>')
    out.append(f'<text x="{bx + pw // 2}" y="{HEIGHT - 10}" text-anchor="middle">'
               f'{escape(x_label)}{" (log)" if logx else ""}</text>')
    for k, (name, p) in enumerate(pts.items()):
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in p)
        if len(p) >= 2:
            out.append(f'<polyline class="series" data-series="{escape(name)}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        for a, b in p:
            out.append(f'<circle class="marker" cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="2.5" fill="{color}"/>')
        ly = MARGIN_TOP + 8 + 16 * k
        lx = WIDTH - MARGIN_RIGHT - 150
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 24}" y="{ly + 4}">'
                   f'{escape(name)}{" (log)" if logy else ""}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_path, x_column: str, y_columns: Sequence[str], svg_path,
              logx: bool = False, logy: bool = False, title: str | None = None) -> None:
    cols = read_columns(csv_path, [x_column, *y_columns])
    svg = render_svg(cols[x_column], {c: cols[c] for c in y_columns}, x_column, logx, logy, title)
    Path(svg_path).write_text(svg)
