"""Static SVG scatter plots of objective-space fronts.

Hand-rolled SVG keeps the output deterministic byte-for-byte: no library
version drift, no timestamps, fixed number formatting.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PANEL = 360          # px per square panel
MARGIN = 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _panel_svg(series: list[tuple[str, np.ndarray]], xi: int, yi: int,
               x0: int, labels: tuple[str, str]) -> list[str]:
    pts_all = np.vstack([p[:, [xi, yi]] for _, p in series if len(p)])
    lo = pts_all.min(axis=0)
    hi = pts_all.max(axis=0)
    span = np.where(hi - lo < 1e-12, 1.0, hi - lo)
    lo = lo - 0.05 * span
    hi = hi + 0.05 * span
    span = hi - lo

    def sx(v):
        return x0 + MARGIN + (v - lo[0]) / span[0] * (PANEL - 2 * MARGIN)

    def sy(v):
        return MARGIN + (hi[1] - v) / span[1] * (PANEL - 2 * MARGIN)

    out = [f'<rect x="{x0 + MARGIN}" y="{MARGIN}" '
           f'width="{PANEL - 2 * MARGIN}" height="{PANEL - 2 * MARGIN}" '
           f'fill="none" stroke="#999"/>']
    out.append(f'<text x="{x0 + PANEL // 2}" y="{PANEL - 10}" '
               f'text-anchor="middle" font-size="12">{labels[0]}</text>')
    out.append(f'<text x="{x0 + 14}" y="{PANEL // 2}" text-anchor="middle" '
               f'font-size="12" transform="rotate(-90 {x0 + 14} '
               f'{PANEL // 2})">{labels[1]}</text>')
    for lim, anchor, pos in ((lo, "start", x0 + MARGIN),
                             (hi, "end", x0 + PANEL - MARGIN)):
        out.append(f'<text x="{pos}" y="{PANEL - MARGIN + 14}" '
                   f'text-anchor="{anchor}" font-size="10">'
                   f'{_fmt(lim[0])}</text>')
    out.append(f'<text x="{x0 + MARGIN - 4}" y="{PANEL - MARGIN}" '
               f'text-anchor="end" font-size="10">{_fmt(lo[1])}</text>')
    out.append(f'<text x="{x0 + MARGIN - 4}" y="{MARGIN + 10}" '
               f'text-anchor="end" font-size="10">{_fmt(hi[1])}</text>')
    for si, (label, pts) in enumerate(series):
        color = COLORS[si % len(COLORS)]
        for p in pts:
            out.append(f'<circle cx="{_fmt(sx(p[xi]))}" '
                       f'cy="{_fmt(sy(p[yi]))}" r="3" fill="{color}" '
                       f'fill-opacity="0.8"/>')
        out.append(f'<text x="{x0 + MARGIN + 4}" y="{MARGIN + 14 + 14 * si}" '
                   f'font-size="11" fill="{color}">{label}</text>')
    return out


def front_scatter_svg(series: list[tuple[str, np.ndarray]],
                      objective_names: list[str] | None = None) -> str:
    """SVG scatter of one or more fronts: a single panel for two
    objectives, the three pairwise panels for three."""
    nonempty = [p for _, p in series if len(p)]
    if not nonempty:
        raise ValueError("nothing to plot")
    M = nonempty[0].shape[1]
    names = objective_names or [f"f{m + 1}" for m in range(M)]
    pairs = [(0, 1)] if M == 2 else [(0, 1), (0, 2), (1, 2)]
    body: list[str] = []
    for k, (xi, yi) in enumerate(pairs):
        body += _panel_svg(series, xi, yi, k * PANEL,
                           (names[xi], names[yi]))
    width = PANEL * len(pairs)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{PANEL}" viewBox="0 0 {width} {PANEL}">\n'
            + "\n".join(body) + "\n</svg>\n")


def save_front_svg(path: str | Path, series, objective_names=None) -> None:
    Path(path).write_text(front_scatter_svg(series, objective_names))
