"""Deterministic run artifacts: CSV, JSON, manifest, and simple SVG plots.

All writers emit byte-identical output for identical inputs: floats are
formatted with %.12g, JSON keys are sorted, and nothing derived from wall
time or process identity is written.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np


def fmt(value) -> str:
    """Format one CSV field."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return "%d" % value
    if isinstance(value, (float, np.floating)):
        return "%.12g" % value
    return str(value)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(_jsonable(obj), f, sort_keys=True, indent=2)
        f.write("\n")


def write_manifest(out_dir: str, command: str, cfg: dict, seed: int,
                   threads: int, outputs) -> None:
    """Record the resolved inputs of a run next to its outputs.

    No timestamps or host details: rerunning the same command on the same
    inputs must reproduce the manifest byte for byte.
    """
    write_json(os.path.join(out_dir, "manifest.json"), {
        "tool": "evtrap",
        "command": command,
        "seed": seed,
        "threads": threads,
        "config": cfg,
        "outputs": sorted(outputs),
    })


# --- minimal SVG plotting (no external renderer) ---

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 55
_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                  "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / max(n - 1, 1)))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if span / (step * mult) <= n:
            step *= mult
            break
    t0 = math.ceil(lo / step) * step
    ticks = []
    t = t0
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks or [lo]


def _log_ticks(lo: float, hi: float):
    d0, d1 = math.ceil(math.log10(lo) - 1e-9), math.floor(math.log10(hi)
                                                          + 1e-9)
    decades = list(range(d0, d1 + 1))
    step = max(1, len(decades) // 6)
    return [10.0 ** d for d in decades[::step]]


class _Axes:
    """Maps data coordinates to the fixed SVG plot box."""

    def __init__(self, xlo, xhi, ylo, yhi, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        tx = math.log10 if logx else float
        ty = math.log10 if logy else float
        self.xlo, self.xhi = tx(xlo), tx(xhi)
        self.ylo, self.yhi = ty(ylo), ty(yhi)
        if self.xhi <= self.xlo:
            self.xhi = self.xlo + 1.0
        if self.yhi <= self.ylo:
            self.yhi = self.ylo + 1.0

    def px(self, x):
        t = math.log10(x) if self.logx else x
        return _ML + (t - self.xlo) / (self.xhi - self.xlo) \
            * (_W - _ML - _MR)

    def py(self, y):
        t = math.log10(y) if self.logy else y
        return _H - _MB - (t - self.ylo) / (self.yhi - self.ylo) \
            * (_H - _MT - _MB)


def _svg_header(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
        f'height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]


def _svg_axes(parts, ax, xlabel, ylabel):
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>')
    xticks = _log_ticks(10 ** ax.xlo, 10 ** ax.xhi) if ax.logx \
        else _ticks(ax.xlo, ax.xhi)
    yticks = _log_ticks(10 ** ax.ylo, 10 ** ax.yhi) if ax.logy \
        else _ticks(ax.ylo, ax.yhi)
    for t in xticks:
        x = ax.px(t)
        if not _ML - 1 <= x <= _W - _MR + 1:
            continue
        parts.append(f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{t:g}</text>')
    for t in yticks:
        y = ax.py(t)
        if not _MT - 1 <= y <= _H - _MB + 1:
            continue
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.1f}" x2="{_ML}" '
                     f'y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{t:g}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="18" y="{(_MT + _H - _MB) / 2:.0f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13" transform="rotate(-90 18 '
                 f'{(_MT + _H - _MB) / 2:.0f})">{ylabel}</text>')


def svg_line(path: str, x, series: dict, title: str, xlabel: str,
             ylabel: str, logx: bool = False, logy: bool = False) -> None:
    """Line plot of one or more named series over a shared x array."""
    x = np.asarray(x, dtype=float)
    finite_y = np.concatenate([
        np.asarray(v, dtype=float)[np.isfinite(np.asarray(v, dtype=float))]
        for v in series.values()])
    if logy:
        finite_y = finite_y[finite_y > 0]
    if x.size == 0 or finite_y.size == 0:
        raise ValueError("nothing to plot")
    ax = _Axes(x.min(), x.max(), finite_y.min(), finite_y.max(),
               logx=logx, logy=logy)
    parts = _svg_header(title)
    _svg_axes(parts, ax, xlabel, ylabel)
    for k, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        color = _SERIES_COLORS[k % len(_SERIES_COLORS)]
        ok = np.isfinite(ys) & (ys > 0 if logy else True)
        pts = " ".join(f"{ax.px(xv):.1f},{ax.py(yv):.1f}"
                       for xv, yv in zip(x[ok], ys[ok]))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - _MR - 8}" y="{_MT + 16 + 14 * k}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="12" fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


_VIRIDIS = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98),
            (253, 231, 37))


def _colormap(v: float) -> str:
    if not math.isfinite(v):
        return "#d0d0d0"
    v = min(max(v, 0.0), 1.0) * (len(_VIRIDIS) - 1)
    i = min(int(v), len(_VIRIDIS) - 2)
    f = v - i
    c0, c1 = _VIRIDIS[i], _VIRIDIS[i + 1]
    return "#%02x%02x%02x" % tuple(
        int(round(a + (b - a) * f)) for a, b in zip(c0, c1))


def svg_heatmap(path: str, grid, rows, cols, title: str, xlabel: str,
                ylabel: str) -> None:
    """Cell heatmap of grid[row, col]; rows plotted bottom to top."""
    grid = np.asarray(grid, dtype=float)
    nr, nc = grid.shape
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    if hi <= lo:
        hi = lo + 1.0
    cw = (_W - _ML - _MR) / nc
    ch = (_H - _MT - _MB) / nr
    parts = _svg_header(title)
    for i in range(nr):
        for j in range(nc):
            x = _ML + j * cw
            y = _H - _MB - (i + 1) * ch
            color = _colormap((grid[i, j] - lo) / (hi - lo))
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" '
                         f'width="{cw + 0.5:.1f}" height="{ch + 0.5:.1f}" '
                         f'fill="{color}"/>')
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>')
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    for j in range(0, nc, max(1, nc // 8)):
        x = _ML + (j + 0.5) * cw
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{cols[j]:g}</text>')
    for i in range(0, nr, max(1, nr // 8)):
        y = _H - _MB - (i + 0.5) * ch
        parts.append(f'<text x="{_ML - 8}" y="{y + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{rows[i]:.3g}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="18" y="{(_MT + _H - _MB) / 2:.0f}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13" transform="rotate(-90 18 '
                 f'{(_MT + _H - _MB) / 2:.0f})">{ylabel}</text>')
    # compact legend for the value range
    parts.append(f'<text x="{_W - _MR - 8}" y="{_MT - 8}" '
                 f'text-anchor="end" font-family="sans-serif" '
                 f'font-size="11">{lo:.3g} .. {hi:.3g}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
