"""Minimal SVG output: line charts, scatter plots and matrix heatmaps.

Plots are for people; the numbers behind them live in the CSV and JSON
files next to them.  Output is a pure function of the input data, so
repeated runs write identical files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray

    def finite(self, log_y: bool) -> tuple[np.ndarray, np.ndarray]:
        x, y = np.asarray(self.x, float), np.asarray(self.y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if log_y:
            ok &= y > 0
        return x[ok], y[ok]


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    log_y: bool = False
    parts: list[str] = field(default_factory=list)

    def _frame(self, xlim, ylim) -> list[str]:
        x0, y0, x1, y1 = MARGIN, MARGIN // 2, WIDTH - MARGIN // 2, HEIGHT - MARGIN
        out = [f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="#000"/>']
        for k in range(5):
            fx, fy = xlim[0] + (xlim[1] - xlim[0]) * k / 4, ylim[0] + (ylim[1] - ylim[0]) * k / 4
            px, py = self._px(fx, xlim), self._py(fy, ylim)
            ylab = f"1e{_num(fy)}" if self.log_y else _num(fy)
            out.append(f'<text x="{px:.1f}" y="{y1 + 16}" font-size="11" text-anchor="middle">{_num(fx)}</text>')
            out.append(f'<text x="{x0 - 6}" y="{py + 4:.1f}" font-size="11" text-anchor="end">{ylab}</text>')
        out.append(f'<text x="{(x0 + x1) / 2}" y="{HEIGHT - 14}" font-size="12" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="14" y="{(y0 + y1) / 2}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {(y0 + y1) / 2})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{WIDTH / 2}" y="18" font-size="13" text-anchor="middle">{escape(self.title)}</text>')
        return out

    @staticmethod
    def _px(v, lim):
        return MARGIN + (v - lim[0]) / (lim[1] - lim[0]) * (WIDTH - 1.5 * MARGIN)

    @staticmethod
    def _py(v, lim):
        return HEIGHT - MARGIN - (v - lim[0]) / (lim[1] - lim[0]) * (HEIGHT - 1.5 * MARGIN)

    def _limits(self, pts: list[tuple[np.ndarray, np.ndarray]]):
        xs = np.concatenate([p[0] for p in pts]) if pts else np.zeros(1)
        ys = np.concatenate([p[1] for p in pts]) if pts else np.zeros(1)
        if not xs.size:
            xs = ys = np.zeros(1)
        xlim, ylim = [xs.min(), xs.max()], [ys.min(), ys.max()]
        for lim in (xlim, ylim):
            if lim[1] - lim[0] <= 0:
                lim[0], lim[1] = lim[0] - 1.0, lim[1] + 1.0
        return xlim, ylim

    def lines(self, series: list[Series]) -> "Figure":
        pts = [s.finite(self.log_y) for s in series]
        if self.log_y:
            pts = [(x, np.log10(y)) for x, y in pts]
        xlim, ylim = self._limits(pts)
        self.parts += self._frame(xlim, ylim)
        for k, (s, (x, y)) in enumerate(zip(series, pts)):
            color = PALETTE[k % len(PALETTE)]
            coords = " ".join(f"{self._px(a, xlim):.1f},{self._py(b, ylim):.1f}" for a, b in zip(x, y))
            self.parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
            self.parts.append(f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 14 * k}" font-size="11" fill="{color}" '
                              f'text-anchor="end">{escape(s.label)}</text>')
        return self

    def scatter(self, groups: list[Series], radius: float = 1.5) -> "Figure":
        pts = [g.finite(False) for g in groups]
        xlim, ylim = self._limits(pts)
        self.parts += self._frame(xlim, ylim)
        for k, (g, (x, y)) in enumerate(zip(groups, pts)):
            color = PALETTE[k % len(PALETTE)]
            self.parts += [f'<circle cx="{self._px(a, xlim):.1f}" cy="{self._py(b, ylim):.1f}" r="{radius}" '
                           f'fill="{color}" fill-opacity="0.5"/>' for a, b in zip(x, y)]
            self.parts.append(f'<text x="{WIDTH - MARGIN}" y="{MARGIN + 14 * k}" font-size="11" fill="{color}" '
                              f'text-anchor="end">{escape(g.label)}</text>')
        return self

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}">\n<rect width="100%" height="100%" fill="#fff"/>\n{body}\n</svg>\n')

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())


def heatmap(names: list[str], matrix, title: str = "", decimals: int = 2) -> str:
    """Diverging red/blue heatmap with the values printed in the cells."""
    m = np.asarray(matrix, dtype=np.float64)
    n = len(names)
    cell = 60
    left, top = 120, 40
    scale = float(np.max(np.abs(m[np.isfinite(m)]))) if np.isfinite(m).any() else 1.0
    scale = scale or 1.0
    parts = [f'<text x="{left + n * cell / 2}" y="20" font-size="13" text-anchor="middle">{escape(title)}</text>']
    for i in range(n):
        parts.append(f'<text x="{left - 6}" y="{top + i * cell + cell / 2 + 4}" font-size="11" '
                     f'text-anchor="end">{escape(names[i])}</text>')
        parts.append(f'<text x="{left + i * cell + cell / 2}" y="{top + n * cell + 16}" font-size="11" '
                     f'text-anchor="middle">{escape(names[i])}</text>')
        for j in range(n):
            v = m[i, j]
            t = 0.0 if not math.isfinite(v) else max(-1.0, min(1.0, v / scale))
            shade = int(round(255 * (1 - abs(t))))
            color = f"rgb(255,{shade},{shade})" if t > 0 else f"rgb({shade},{shade},255)"
            parts.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                         f'fill="{color}" stroke="#fff"/>')
            parts.append(f'<text x="{left + j * cell + cell / 2}" y="{top + i * cell + cell / 2 + 4}" '
                         f'font-size="11" text-anchor="middle">{v:.{decimals}f}</text>')
    w, h = left + n * cell + 20, top + n * cell + 30
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
            f'<rect width="100%" height="100%" fill="#fff"/>\n' + "\n".join(parts) + "\n</svg>\n")
