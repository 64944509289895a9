"""Static SVG scatter plots of embedded epochs."""

from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

# Qualitative palette; labels past the end wrap around.
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH = 640
HEIGHT = 640
MARGIN = 48
LEGEND_WIDTH = 140


def _num(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _scale(coords: np.ndarray):
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    span = float(np.max(hi - lo))
    if span == 0:
        span = 1.0
    inner = WIDTH - 2 * MARGIN
    mid = (lo + hi) / 2

    def to_px(p):
        x = WIDTH / 2 + (p[0] - mid[0]) / span * inner
        y = HEIGHT / 2 - (p[1] - mid[1]) / span * inner
        return x, y

    return to_px


def scatter_svg(
    coords,
    labels: Optional[Sequence[int]] = None,
    trail: Optional[Sequence[int]] = None,
    title: str = "",
    trail_name: str = "",
) -> str:
    """Render points coloured by label, optionally joining ``trail`` rows in order.

    Parameters
    ----------
    coords : array_like, shape (n, 2)
    labels : sequence of int, optional
        Cluster label per point; all points share one colour when omitted.
    trail : sequence of int, optional
        Row indices to connect with a polyline, marked ``start`` and ``end``.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    n = len(coords)
    labels = [0] * n if labels is None else [int(v) for v in labels]
    to_px = _scale(coords) if n else (lambda p: (WIDTH / 2, HEIGHT / 2))
    total_w = WIDTH + LEGEND_WIDTH
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{HEIGHT}" '
        f'viewBox="0 0 {total_w} {HEIGHT}">',
        f'<rect x="0" y="0" width="{total_w}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{MARGIN}" y="28" font-family="sans-serif" font-size="16">{escape(title)}</text>')
    out.append('<g id="points" stroke="none" fill-opacity="0.75">')
    for p, lab in zip(coords, labels):
        x, y = to_px(p)
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="3" fill="{PALETTE[lab % len(PALETTE)]}"/>')
    out.append("</g>")
    if trail:
        pts = [to_px(coords[i]) for i in trail]
        path = " ".join(f"{_num(x)},{_num(y)}" for x, y in pts)
        out.append('<g id="trail">')
        out.append(f'<polyline points="{path}" fill="none" stroke="#000000" stroke-width="1.2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="3.5" fill="none" stroke="#000000"/>')
        for tag, (x, y) in (("start", pts[0]), ("end", pts[-1])):
            out.append(
                f'<text x="{_num(x + 6)}" y="{_num(y - 6)}" font-family="sans-serif" font-size="12">{tag}</text>'
            )
        out.append("</g>")
    out.append('<g id="legend" font-family="sans-serif" font-size="12">')
    counts = np.bincount(labels, minlength=1) if n else np.zeros(1, int)
    y = MARGIN
    for lab, count in enumerate(counts.tolist()):
        if count == 0:
            continue
        colour = PALETTE[lab % len(PALETTE)]
        out.append(f'<rect x="{WIDTH + 8}" y="{y - 9}" width="10" height="10" fill="{colour}"/>')
        out.append(f'<text x="{WIDTH + 24}" y="{y}">cluster {lab} (n={count})</text>')
        y += 18
    if trail:
        out.append(f'<text x="{WIDTH + 8}" y="{y + 6}">trail: {escape(trail_name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
