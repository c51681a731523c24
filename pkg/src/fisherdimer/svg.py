"""Minimal SVG writers: line plots and particle-trajectory renderings."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(series: Sequence[tuple], title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 640, height: int = 420, hline: float | None = None) -> str:
    """series: (label, xs, ys) triples; non-finite points break the polyline."""
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs_all = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.zeros(1)
    xs_all, ys_all = xs_all[np.isfinite(xs_all)], ys_all[np.isfinite(ys_all)]
    x0, x1 = (float(xs_all.min()), float(xs_all.max())) if xs_all.size else (0.0, 1.0)
    y0, y1 = (float(ys_all.min()), float(ys_all.max())) if ys_all.size else (0.0, 1.0)
    if hline is not None:
        y0, y1 = min(y0, hline), max(y1, hline)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_num(X(t))}" y1="{mt + ph}" x2="{_num(X(t))}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(X(t))}" y="{mt + ph + 18}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 5}" y1="{_num(Y(t))}" x2="{ml}" y2="{_num(Y(t))}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{_num(Y(t) + 4)}" text-anchor="end">{t:.4g}</text>')
    if hline is not None:
        out.append(f'<line x1="{ml}" y1="{_num(Y(hline))}" x2="{ml + pw}" y2="{_num(Y(hline))}" '
                   f'stroke="gray" stroke-dasharray="4 3"/>')
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        seg = []
        for xv, yv in zip(np.asarray(xs, float), np.asarray(ys, float)):
            if math.isfinite(xv) and math.isfinite(yv):
                seg.append(f"{_num(X(xv))},{_num(Y(yv))}")
            elif seg:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
                seg = []
        if seg:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
        ly = mt + 16 * i + 10
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{_escape(label)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{mt - 15}" text-anchor="middle" font-size="14">{_escape(title)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {mt + ph / 2})">{_escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trace_plot(trace, cell: float = 6.0, title: str = "") -> str:
    """Particle trajectories: each covered b-edge leaving an a-edge is drawn as a segment."""
    T, W = trace.rows, trace.width
    width, height = W * cell + 20, T * cell + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{_num(width)}" height="{_num(height)}" fill="white"/>',
           f'<text x="10" y="16">{_escape(title)}</text>']

    def pos(t, k):
        # a-edge (t, k) sits at horizontal coordinate k + (t mod 2)/2 + 1/2; time runs upwards
        return 10 + (k + 0.5 * (t % 2) + 0.5) * cell, height - 10 - t * cell

    for t in range(T - 1):
        p = t % 2
        for k in np.flatnonzero(trace.occupancy[t]):
            x0, y0 = pos(t, k)
            k2 = (k - 1 + p) % W if trace.b_left[t, k] else (k + p) % W
            x1, y1 = pos(t + 1, k2)
            if abs(x1 - x0) > cell:  # wraps horizontally
                continue
            out.append(f'<line x1="{_num(x0)}" y1="{_num(y0)}" x2="{_num(x1)}" y2="{_num(y1)}" '
                       f'stroke="black" stroke-width="1"/>')
    for t, k in trace.creations:
        x0, y0 = pos(t, k)
        out.append(f'<circle cx="{_num(x0)}" cy="{_num(y0)}" r="{_num(cell / 3)}" fill="#d62728"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
