"""Self-contained SVG line plots. Output depends only on the inputs (fixed number formatting)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from html import escape
from typing import List, Sequence, Tuple

from src.utils.errors import ArgumentError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 64, 120, 36, 48
N_TICKS = 5


@dataclass
class Series:
    name: str
    xs: List[float]
    ys: List[float]


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _span(values: Sequence[float]) -> Tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.05, 0.5)
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


@dataclass
class LinePlot:
    title: str
    xlabel: str
    ylabel: str
    width: int = 640
    height: int = 400
    series: List[Series] = field(default_factory=list)

    def add_series(self, name: str, xs: Sequence[float], ys: Sequence[float]) -> "LinePlot":
        if len(xs) != len(ys):
            raise ArgumentError(f"series {name!r}: {len(xs)} x values but {len(ys)} y values")
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if pts:
            self.series.append(Series(name, [p[0] for p in pts], [p[1] for p in pts]))
        return self

    def render(self) -> str:
        if not self.series:
            raise ArgumentError(f"plot {self.title!r} has no finite points")
        x_lo, x_hi = _span([x for s in self.series for x in s.xs])
        y_lo, y_hi = _span([y for s in self.series for y in s.ys])
        plot_w = self.width - MARGIN_LEFT - MARGIN_RIGHT
        plot_h = self.height - MARGIN_TOP - MARGIN_BOTTOM

        def px(x: float) -> float:
            return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

        def py(y: float) -> float:
            return MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="white"/>',
            f'<text x="{self.width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
            f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>',
        ]
        for i in range(N_TICKS + 1):
            xv = x_lo + (x_hi - x_lo) * i / N_TICKS
            yv = y_lo + (y_hi - y_lo) * i / N_TICKS
            out.append(
                f'<line x1="{_num(px(xv))}" y1="{MARGIN_TOP + plot_h}" x2="{_num(px(xv))}" y2="{MARGIN_TOP + plot_h + 4}" stroke="#444"/>'
            )
            out.append(
                f'<text x="{_num(px(xv))}" y="{MARGIN_TOP + plot_h + 16}" text-anchor="middle">{escape(_tick(xv))}</text>'
            )
            out.append(f'<line x1="{MARGIN_LEFT - 4}" y1="{_num(py(yv))}" x2="{MARGIN_LEFT}" y2="{_num(py(yv))}" stroke="#444"/>')
            out.append(
                f'<text x="{MARGIN_LEFT - 6}" y="{_num(py(yv) + 4)}" text-anchor="end">{escape(_tick(yv))}</text>'
            )
        out.append(
            f'<text x="{MARGIN_LEFT + plot_w / 2:.1f}" y="{self.height - 10}" text-anchor="middle">{escape(self.xlabel)}</text>'
        )
        out.append(
            f'<text x="14" y="{MARGIN_TOP + plot_h / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {MARGIN_TOP + plot_h / 2:.1f})">{escape(self.ylabel)}</text>'
        )

        for k, s in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            if len(s.xs) == 1:
                out.append(f'<circle cx="{_num(px(s.xs[0]))}" cy="{_num(py(s.ys[0]))}" r="3" fill="{color}"/>')
            else:
                points = " ".join(f"{_num(px(x))},{_num(py(y))}" for x, y in zip(s.xs, s.ys))
                out.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            ly = MARGIN_TOP + 14 * k + 8
            lx = self.width - MARGIN_RIGHT + 10
            out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 16}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 20}" y="{ly + 4}">{escape(s.name)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
