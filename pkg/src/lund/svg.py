"""Minimal SVG emitters for heatmaps and log-scale curves (no plotting deps)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

# viridis-like ramp, interpolated linearly
_RAMP = np.array([
    [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
    [31, 158, 137], [53, 183, 121], [109, 205, 89], [180, 222, 44], [253, 231, 37],
], dtype=np.float64)
_LINE_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _color(v: float) -> str:
    if not np.isfinite(v):
        return "#cccccc"
    x = min(max(v, 0.0), 1.0) * (len(_RAMP) - 1)
    i = min(int(x), len(_RAMP) - 2)
    c = _RAMP[i] + (x - i) * (_RAMP[i + 1] - _RAMP[i])
    return "#%02x%02x%02x" % tuple(int(round(u)) for u in c)


def heatmap(values, row_labels, col_labels, title: str = "", vmin=None, vmax=None,
            cell: int = 22) -> str:
    """Rows drawn top to bottom; NaN cells are grey."""
    V = np.asarray(values, dtype=np.float64)
    finite = V[np.isfinite(V)]
    lo = float(finite.min()) if vmin is None and finite.size else (vmin or 0.0)
    hi = float(finite.max()) if vmax is None and finite.size else (vmax if vmax is not None else 1.0)
    span = hi - lo if hi > lo else 1.0
    left, top = 70, 40
    w = left + cell * V.shape[1] + 20
    h = top + cell * V.shape[0] + 60
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">',
           f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>']
    for i in range(V.shape[0]):
        y = top + i * cell
        out.append(f'<text x="{left - 4}" y="{y + cell * 0.65:.1f}" text-anchor="end">{escape(str(row_labels[i]))}</text>')
        for j in range(V.shape[1]):
            x = left + j * cell
            v = V[i, j]
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_color((v - lo) / span)}">'
                       f'<title>{v:.4g}</title></rect>')
    yb = top + V.shape[0] * cell + 12
    for j, lab in enumerate(col_labels):
        x = left + j * cell + cell / 2
        out.append(f'<text x="{x:.1f}" y="{yb}" text-anchor="end" transform="rotate(-60 {x:.1f} {yb})">{escape(str(lab))}</text>')
    out.append("</svg>")
    return "\n".join(out)


def curves(x, series: dict, title: str = "", logx: bool = True, logy: bool = True,
           width: int = 560, height: int = 360) -> str:
    """Line plot of named series against a shared ``x``; non-positive values
    are dropped on log axes."""
    x = np.asarray(x, dtype=np.float64)
    left, right, top, bottom = 60, 130, 30, 40
    fx = np.log10 if logx else (lambda a: a)
    fy = np.log10 if logy else (lambda a: a)
    pts = {}
    for name, y in series.items():
        y = np.asarray(y, dtype=np.float64)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        with np.errstate(divide="ignore"):
            pts[name] = (fx(x[ok]), fy(y[ok]))
    allx = np.concatenate([p[0] for p in pts.values()]) if pts else np.zeros(0)
    ally = np.concatenate([p[1] for p in pts.values()]) if pts else np.zeros(0)
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">',
           f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for k in range(5):
        vx = x0 + k * (x1 - x0) / 4
        vy = y0 + k * (y1 - y0) / 4
        lx = f"1e{vx:.1f}" if logx else f"{vx:.3g}"
        ly = f"1e{vy:.1f}" if logy else f"{vy:.3g}"
        out.append(f'<text x="{sx(vx):.1f}" y="{top + ph + 14}" text-anchor="middle">{lx}</text>')
        out.append(f'<text x="{left - 4}" y="{sy(vy) + 3:.1f}" text-anchor="end">{ly}</text>')
    for c, (name, (px, py)) in enumerate(pts.items()):
        color = _LINE_COLORS[c % len(_LINE_COLORS)]
        if px.size:
            path = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(px, py))
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 14 * c
        out.append(f'<line x1="{width - right + 8}" y1="{ly}" x2="{width - right + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - right + 28}" y="{ly + 3}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out)


def log_label(t) -> str:
    t = float(t)
    if t > 0 and math.isclose(math.log10(t), round(math.log10(t)), abs_tol=1e-9):
        return f"1e{int(round(math.log10(t)))}"
    return f"{t:.3g}"
