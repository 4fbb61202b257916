"""Minimal SVG line-plot emitter (axes + polylines), no plotting dependency."""

from __future__ import annotations

import math

_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def line_plot(series: dict[str, list[tuple[float, float]]], *, title: str,
              xlabel: str, ylabel: str, log_y: bool = False) -> str:
    """Render named (x, y) series to an SVG document string."""
    pts_all = [(x, y) for pts in series.values() for x, y in pts
               if not log_y or y > 0]
    if not pts_all:
        pts_all = [(0.0, 1.0)]
    xs = [p[0] for p in pts_all]
    ys = [math.log10(p[1]) if log_y else p[1] for p in pts_all]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(y):
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'font-family="monospace" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{_W / 2:.0f}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{_H / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {_H / 2:.0f})">{ylabel}</text>',
    ]
    for t in _ticks(x0, x1):
        parts.append(f'<text x="{sx(t):.1f}" y="{_H - _MB + 16}" '
                     f'text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        label = f"1e{t:.1f}" if log_y else f"{t:.3g}"
        parts.append(f'<text x="{_ML - 6}" y="{sy(t) + 4:.1f}" '
                     f'text-anchor="end">{label}</text>')
        parts.append(f'<line x1="{_ML}" y1="{sy(t):.1f}" x2="{_W - _MR}" '
                     f'y2="{sy(t):.1f}" stroke="#dddddd"/>')
    for k, (name, pts) in enumerate(sorted(series.items())):
        color = _COLORS[k % len(_COLORS)]
        drawable = [(x, y) for x, y in pts if not log_y or y > 0]
        coords = " ".join(
            f"{sx(x):.1f},{sy(math.log10(y) if log_y else y):.1f}"
            for x, y in sorted(drawable))
        if coords:
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - _MR - 4}" y="{_MT + 14 + 14 * k}" '
                     f'text-anchor="end" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
