"""Hand-written SVG for the hit-curve plot and the diversity heat map."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np


def _f(x: float) -> str:
    return f"{x:.2f}"


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def hit_curves(curves: list[tuple[str, np.ndarray]], n_obs: int, n_active: int, max_n: int) -> str:
    """Expected hits against shortlist size, with the random-ranking diagonal dashed."""
    w, h, left, bottom, top, right = 520, 360, 50, 40, 20, 130
    pw, ph = w - left - right, h - top - bottom
    ymax = max(1.0, max(float(c[:max_n].max()) for _, c in curves))

    def xy(n, hits):
        return left + pw * n / max_n, top + ph * (1 - hits / ymax)

    body = [
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{h - 8}" text-anchor="middle">shortlist size n</text>',
        f'<text x="12" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 12 {top + ph / 2})">hits H(n)</text>',
        f'<text x="{left}" y="{top + ph + 14}" text-anchor="middle">0</text>',
        f'<text x="{left + pw}" y="{top + ph + 14}" text-anchor="middle">{max_n}</text>',
        f'<text x="{left - 4}" y="{top + 4}" text-anchor="end">{_f(ymax)}</text>',
    ]
    x0, y0 = xy(0, 0)
    x1, y1 = xy(max_n, max_n * n_active / n_obs)
    body.append(
        f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="gray" stroke-dasharray="4 3"/>'
    )
    shades = np.linspace(0, 160, max(len(curves), 1)).astype(int)
    for k, (label, hits) in enumerate(curves):
        pts = [xy(0, 0)] + [xy(n, hits[n - 1]) for n in range(1, max_n + 1)]
        grey = f"rgb({shades[k]},{shades[k]},{shades[k]})"
        body.append(
            f'<polyline fill="none" stroke="{grey}" stroke-width="1.5" points="'
            + " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
            + '"/>'
        )
        ly = top + 14 * (k + 1)
        body.append(f'<line x1="{w - right + 10}" y1="{ly}" x2="{w - right + 30}" y2="{ly}" stroke="{grey}" stroke-width="1.5"/>')
        body.append(f'<text x="{w - right + 34}" y="{ly + 4}">{escape(label)}</text>')
    ly = top + 14 * (len(curves) + 1)
    body.append(f'<line x1="{w - right + 10}" y1="{ly}" x2="{w - right + 30}" y2="{ly}" stroke="gray" stroke-dasharray="4 3"/>')
    body.append(f'<text x="{w - right + 34}" y="{ly + 4}">random</text>')
    return _doc(w, h, body)


def rank_heatmap(columns: list[str], avep: list[float], ranks: np.ndarray, n_obs: int) -> str:
    """Grey cells per (active, column); darker means a smaller (better) rank."""
    cell_w, cell_h = 60, 8
    left, top, bottom = 10, 10, 40
    n_rows, n_cols = ranks.shape
    w = left * 2 + cell_w * n_cols
    h = top + cell_h * n_rows + bottom
    body = []
    span = max(n_obs - 1, 1)
    for i in range(n_rows):
        for j in range(n_cols):
            g = int(round(255 * (ranks[i, j] - 1) / span))
            body.append(
                f'<rect x="{left + j * cell_w}" y="{top + i * cell_h}" width="{cell_w}" height="{cell_h}" '
                f'fill="rgb({g},{g},{g})"/>'
            )
    base = top + cell_h * n_rows
    for j, (name, a) in enumerate(zip(columns, avep)):
        cx = left + j * cell_w + cell_w / 2
        body.append(f'<text x="{_f(cx)}" y="{base + 14}" text-anchor="middle">{escape(name)}</text>')
        body.append(f'<text x="{_f(cx)}" y="{base + 28}" text-anchor="middle">{a:.3f}</text>')
    return _doc(w, h, body)
