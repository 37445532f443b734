"""Static SVG rendering of trajectories and error tables.

Output is plain text built from the input numbers with fixed-precision
formatting, so identical inputs give byte-identical files.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .kinematics import Skeleton, forward_kinematics

WIDTH, HEIGHT = 640, 400
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(lo: float, hi: float, a: float, b: float):
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lambda v: a + (np.asarray(v) - lo) * (b - a) / (hi - lo)


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> list[str]:
    x0, x1, y0, y1 = MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{HEIGHT / 2:.0f}" font-size="12" transform="rotate(-90 14 {HEIGHT / 2:.0f})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
        f'<text x="{x0}" y="{y0 + 16}" font-size="10">{xr[0]:.3g}</text>',
        f'<text x="{x1}" y="{y0 + 16}" font-size="10" text-anchor="end">{xr[1]:.3g}</text>',
        f'<text x="{x0 - 4}" y="{y0}" font-size="10" text-anchor="end">{yr[0]:.3g}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 8}" font-size="10" text-anchor="end">{yr[1]:.3g}</text>',
    ]


def _polyline(xs, ys, color: str, extra: str = "") -> str:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>'


def line_plot_svg(x, series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """One polyline per named series over the shared ``x`` axis, with a legend."""
    x = np.asarray(x, dtype=float)
    if not series:
        raise ValueError("nothing to plot")
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    if any(len(y) != len(x) for y in ys):
        raise ValueError("every series must match the x axis length")
    ylo = min(float(y.min()) for y in ys)
    yhi = max(float(y.max()) for y in ys)
    sx = _scale(float(x.min()), float(x.max()), MARGIN, WIDTH - MARGIN)
    sy = _scale(ylo, yhi, HEIGHT - MARGIN, MARGIN)
    out = _frame(title, xlabel, ylabel, (float(x.min()), float(x.max())), (ylo, yhi))
    for i, (name, y) in enumerate(zip(series, ys)):
        color = PALETTE[i % len(PALETTE)]
        out.append(_polyline(sx(x), sy(y), color))
        ly = MARGIN + 14 * i
        out.append(f'<text x="{WIDTH - MARGIN + 4}" y="{ly}" font-size="10" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trajectory_svg(times, series: dict, title: str = "trajectory") -> str:
    return line_plot_svg(times, series, title, "time (s)", "value")


def error_table_svg(table, title: str = "summed key-joint error") -> str:
    return line_plot_svg(table.horizons, {name: values for name, values in table.rows}, title,
                         "horizon (ms)", "error (m)")


def skeleton_svg(skeleton: Skeleton, states, every: int = 4, title: str = "skeleton, top view") -> str:
    """Top-down (x, y) stick figures of every ``every``-th frame, darker = later."""
    if every < 1:
        raise ValueError("every must be >= 1")
    states = np.asarray(states, dtype=float)
    frames = list(range(0, len(states), every))
    if frames[-1] != len(states) - 1:
        frames.append(len(states) - 1)
    pos = forward_kinematics(skeleton, states[frames])
    lo, hi = pos[..., :2].min(axis=(0, 1)), pos[..., :2].max(axis=(0, 1))
    span = max(float(np.max(hi - lo)), 1e-6)
    sx = _scale(float(lo[0]), float(lo[0]) + span, MARGIN, HEIGHT - MARGIN)
    sy = _scale(float(lo[1]), float(lo[1]) + span, HEIGHT - MARGIN, MARGIN)
    out = _frame(title, "x (m)", "y (m)", (float(lo[0]), float(lo[0]) + span), (float(lo[1]), float(lo[1]) + span))
    parents = skeleton.parents
    for n, p in enumerate(pos):
        shade = int(round(200 * (1 - (n + 1) / len(pos))))
        color = f"#{shade:02x}{shade:02x}{shade:02x}"
        for j, par in enumerate(parents):
            if par is None or par < 0:
                continue
            out.append(_polyline(sx([p[par, 0], p[j, 0]]), sy([p[par, 1], p[j, 1]]), color))
    out.append("</svg>")
    return "\n".join(out) + "\n"
