"""Minimal deterministic SVG line charts.

Output depends only on the inputs: numbers are written with fixed
precision, colors come from a fixed palette and the only comment is a
constant generator tag. Each data polyline also carries its raw values in
``data-x`` / ``data-y`` attributes so charts can be checked numerically.
"""

from __future__ import annotations

from typing import Dict, Hashable, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape, quoteattr

import numpy as np

GENERATOR = "<!-- generated by trajcluster -->"
PALETTE = (
    "#1b9e77",
    "#d95f02",
    "#7570b3",
    "#e7298a",
    "#66a61e",
    "#e6ab02",
    "#a6761d",
    "#666666",
)
WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 64, "right": 150, "top": 36, "bottom": 52}


def _num(x: float) -> str:
    return f"{x:.2f}"


def _raw(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


class Series:
    """One polyline: label, x and y values, color and stroke width."""

    def __init__(self, label: str, x, y, color: str, width: float = 1.0, opacity: float = 1.0, legend: bool = True):
        self.label = str(label)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.color = color
        self.width = width
        self.opacity = opacity
        self.legend = legend


def line_chart(
    series: Sequence[Series],
    xlabel: str,
    ylabel: str,
    title: str = "",
    width: int = WIDTH,
    height: int = HEIGHT,
) -> str:
    """Render polylines on shared axes. NaN values split a line into gaps."""
    xs = np.concatenate([s.x for s in series]) if series else np.array([0.0, 1.0])
    ys = np.concatenate([s.y for s in series]) if series else np.array([0.0, 1.0])
    xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = width - MARGIN["left"] - MARGIN["right"]
    ph = height - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (y1 - y) / (y1 - y0) * ph

    out: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" data-x0="{x0!r}" data-x1="{x1!r}" data-y0="{y0!r}" data-y1="{y1!r}">',
        GENERATOR,
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>')
    left, bottom = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{left + pw}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(
            f'<text x="{_num(px(t))}" y="{bottom + 16}" text-anchor="middle" font-size="11">{t:.3g}</text>'
        )
    for t in _ticks(y0, y1):
        out.append(
            f'<text x="{left - 6}" y="{_num(py(t) + 4)}" text-anchor="end" font-size="11">{t:.3g}</text>'
        )
    out.append(
        f'<text class="xlabel" x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text class="ylabel" x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for s in series:
        ok = np.isfinite(s.x) & np.isfinite(s.y)
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(s.x[ok], s.y[ok]))
        out.append(
            f'<polyline class="series" data-label={quoteattr(s.label)} data-x="{_raw(s.x)}" data-y="{_raw(s.y)}" '
            f'points="{pts}" fill="none" stroke="{s.color}" stroke-width="{s.width}" '
            f'stroke-opacity="{s.opacity}"/>'
        )
    seen: Dict[str, str] = {}
    for s in series:
        if s.legend and s.label not in seen:
            seen[s.label] = s.color
    for i, (label, color) in enumerate(seen.items()):
        y = MARGIN["top"] + 14 + 18 * i
        lx = width - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 18}" y2="{y - 4}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text class="legend" x="{lx + 24}" y="{y}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def color_for(index: int) -> str:
    return PALETTE[index % len(PALETTE)]


def plot_trajectories(ds, groups: Optional[Dict[Hashable, str]] = None, title: str = "") -> str:
    """One thin polyline per trajectory, colored by group when given."""
    levels: List[str] = []
    if groups is not None:
        levels = list(dict.fromkeys(str(groups[i]) for i in ds.ids))
    series = []
    for tid, t, y in ds.iter_trajectories():
        if groups is None:
            series.append(Series(str(tid), t, y, "#555555", 0.8, 0.5, legend=False))
        else:
            g = str(groups[tid])
            series.append(Series(g, t, y, color_for(levels.index(g)), 0.8, 0.5))
    return line_chart(series, ds.time_col, ds.response_col, title)


def plot_cluster_trajectories(model, times=None, xlabel: str = "time", ylabel: str = "value", title: str = "") -> str:
    """One bold polyline per cluster, evaluated at ``times`` (default: the model grid)."""
    if times is None:
        times = model.grid if model.grid is not None else np.linspace(*model.time_range, 25)
    times = np.asarray(times, dtype=float)
    Y = model.cluster_trajectories(times)
    series = [
        Series(f"{name} ({p:.0%})", times, Y[k], color_for(k), 3.0)
        for k, (name, p) in enumerate(zip(model.cluster_names, model.proportions))
    ]
    return line_chart(series, xlabel, ylabel, title)


def plot_metric(rows: Sequence[Tuple[str, float, float]], metric: str, xlabel: str = "nClusters") -> str:
    """Metric value against number of clusters, one line per method.

    ``rows`` holds ``(method, n_clusters, value)`` tuples.
    """
    methods = list(dict.fromkeys(r[0] for r in rows))
    series = []
    for i, m in enumerate(methods):
        pts = sorted((float(k), float(v)) for mm, k, v in rows if mm == m)
        series.append(Series(m, [p[0] for p in pts], [p[1] for p in pts], color_for(i), 2.0))
    return line_chart(series, xlabel, metric, metric)
