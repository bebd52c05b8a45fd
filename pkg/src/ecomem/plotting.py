"""Static SVG 1.1 output for memory functions and effect densities."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .diagnostics import EffectComparison, MemoryFunction

PANEL_W, PANEL_H = 420, 300
MARGIN = dict(left=60, right=20, top=50, bottom=50)
COLORS = {"fit": "#1f4e79", "band": "#9ecae1", "truth": "#8b0000", "baseline": "#7f7f7f"}


def _nice_ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + 1e-9 * step, step)


class _Panel:
    def __init__(self, x0: float, y0: float, xlim, ylim):
        self.x0, self.y0 = x0, y0
        self.w = PANEL_W - MARGIN["left"] - MARGIN["right"]
        self.h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
        self.xlim, self.ylim = xlim, ylim

    def sx(self, x):
        a, b = self.xlim
        return self.x0 + MARGIN["left"] + (np.asarray(x) - a) / (b - a) * self.w

    def sy(self, y):
        a, b = self.ylim
        return self.y0 + MARGIN["top"] + self.h - (np.asarray(y) - a) / (b - a) * self.h

    def points(self, x, y) -> str:
        return " ".join(f"{px:.2f},{py:.2f}" for px, py in zip(self.sx(x), self.sy(y)))

    def axes(self, xlabel: str, ylabel: str, title: str, subtitle: str = "") -> list[str]:
        left, top = self.x0 + MARGIN["left"], self.y0 + MARGIN["top"]
        out = [
            f'<rect x="{left:.2f}" y="{top:.2f}" width="{self.w}" height="{self.h}" '
            'fill="none" stroke="#333" stroke-width="1"/>',
            f'<text x="{left + self.w / 2:.2f}" y="{self.y0 + 20:.2f}" text-anchor="middle" '
            f'font-size="14" font-weight="bold">{escape(title)}</text>',
        ]
        if subtitle:
            out.append(
                f'<text class="subtitle" x="{left + self.w / 2:.2f}" y="{self.y0 + 36:.2f}" '
                f'text-anchor="middle" font-size="11">{escape(subtitle)}</text>'
            )
        for t in _nice_ticks(*self.xlim):
            x = float(self.sx(t))
            out.append(
                f'<line x1="{x:.2f}" y1="{top + self.h:.2f}" x2="{x:.2f}" y2="{top + self.h + 4:.2f}" stroke="#333"/>'
                f'<text x="{x:.2f}" y="{top + self.h + 16:.2f}" text-anchor="middle" font-size="10">{t:g}</text>'
            )
        for t in _nice_ticks(*self.ylim):
            y = float(self.sy(t))
            out.append(
                f'<line x1="{left - 4:.2f}" y1="{y:.2f}" x2="{left:.2f}" y2="{y:.2f}" stroke="#333"/>'
                f'<text x="{left - 6:.2f}" y="{y + 3:.2f}" text-anchor="end" font-size="10">{t:.3g}</text>'
            )
        out.append(
            f'<text x="{left + self.w / 2:.2f}" y="{top + self.h + 36:.2f}" text-anchor="middle" '
            f'font-size="12">{escape(xlabel)}</text>'
        )
        cx, cy = self.x0 + 16, top + self.h / 2
        out.append(
            f'<text x="{cx:.2f}" y="{cy:.2f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 {cx:.2f} {cy:.2f})">{escape(ylabel)}</text>'
        )
        return out


def _document(width: float, height: float, body: Sequence[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}" '
        'font-family="Helvetica, Arial, sans-serif">\n'
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def memory_svg(
    functions: Sequence[MemoryFunction],
    truth: Mapping[str, Sequence[float]] | None = None,
) -> str:
    """One panel per memory covariate: band, posterior mean, optional truth, threshold."""
    body = []
    for i, mf in enumerate(functions):
        g = [f'<g class="panel" id="panel-{escape(mf.var)}">']
        lags = mf.lags
        t = None if truth is None or mf.var not in truth else np.asarray(truth[mf.var], float)
        ymax = max(float(mf.upper.max()), float(t.max()) if t is not None else 0.0, mf.threshold)
        panel = _Panel(i * PANEL_W, 0, (0, max(len(lags) - 1, 1)), (0, ymax * 1.05 or 1.0))
        subtitle = f"{mf.level * 100:g}% credible band; memory lags {_lag_text(mf.memory_lags)}"
        g += panel.axes("lag", "weight", mf.var, subtitle)
        band = np.concatenate([lags, lags[::-1]]), np.concatenate([mf.lower, mf.upper[::-1]])
        g.append(
            f'<polygon class="band" points="{panel.points(*band)}" fill="{COLORS["band"]}" '
            'fill-opacity="0.6" stroke="none"/>'
        )
        y = float(panel.sy(mf.threshold))
        g.append(
            f'<line class="threshold" x1="{float(panel.sx(0)):.2f}" y1="{y:.2f}" '
            f'x2="{float(panel.sx(lags[-1])):.2f}" y2="{y:.2f}" stroke="#555" stroke-dasharray="4,3"/>'
        )
        g.append(
            f'<polyline class="mean" points="{panel.points(lags, mf.mean)}" fill="none" '
            f'stroke="{COLORS["fit"]}" stroke-width="2"/>'
        )
        if t is not None:
            g.append(
                f'<polyline class="truth" points="{panel.points(lags, t)}" fill="none" '
                f'stroke="{COLORS["truth"]}" stroke-width="2" stroke-dasharray="6,3"/>'
            )
        g.append("</g>")
        body += g
    return _document(max(len(functions), 1) * PANEL_W, PANEL_H, body)


def _lag_text(lags: Sequence[int]) -> str:
    if not lags:
        return "none"
    if list(lags) == list(range(lags[0], lags[-1] + 1)):
        return f"{lags[0]}-{lags[-1]}"
    return ",".join(map(str, lags))


def comparison_svg(cmp: EffectComparison, labels=("memory", "no memory")) -> str:
    """Overlaid posterior densities of one coefficient from two fits."""
    grid, d_mem, d_base = cmp.densities()
    panel = _Panel(0, 0, (grid[0], grid[-1]), (0, 1.05 * max(d_mem.max(), d_base.max(), 1e-12)))
    body = panel.axes(f"beta.{cmp.term}", "density", f"Effect of {cmp.term}")
    body.append(
        f'<polyline class="density memory" points="{panel.points(grid, d_mem)}" fill="none" '
        f'stroke="{COLORS["fit"]}" stroke-width="2"/>'
    )
    body.append(
        f'<polyline class="density baseline" points="{panel.points(grid, d_base)}" fill="none" '
        f'stroke="{COLORS["baseline"]}" stroke-width="2" stroke-dasharray="6,3"/>'
    )
    lx = float(panel.sx(grid[0])) + 8
    for j, (lab, col) in enumerate(zip(labels, (COLORS["fit"], COLORS["baseline"]))):
        ly = MARGIN["top"] + 14 + 14 * j
        body.append(
            f'<line x1="{lx:.2f}" y1="{ly - 4}" x2="{lx + 18:.2f}" y2="{ly - 4}" stroke="{col}" stroke-width="2"/>'
            f'<text x="{lx + 22:.2f}" y="{ly}" font-size="10">{escape(lab)}</text>'
        )
    return _document(PANEL_W, PANEL_H, body)
