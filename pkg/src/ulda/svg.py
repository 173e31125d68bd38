"""Small deterministic SVG plotting: bars, lines and shaded ribbons on shared axes."""
from __future__ import annotations

import math
from typing import List, Optional
from xml.sax.saxutils import escape

import numpy as np

PALETTE = {
    "red": "#d62728",
    "blue": "#1f77b4",
    "orange": "#ff9f1c",
    "green": "#2ca02c",
    "grey": "#7f7f7f",
}


def _n(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_max(v: float) -> float:
    if not v > 0 or not math.isfinite(v):
        return 1.0
    e = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if m * e >= v:
            return m * e
    return 10 * e


class Panel:
    def __init__(self, x, y, w, h, xlim, ylim=None, title="", xlabel="", ylabel=""):
        self.x, self.y, self.w, self.h = x, y, w, h
        self.xlim = xlim
        self.ylim = ylim
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self._items: List[tuple] = []
        self._legend: List[tuple] = []

    def bars(self, centers, heights, width, color, label=None, opacity=0.6):
        self._items.append(("bars", list(centers), list(heights), width, color, opacity))
        if label:
            self._legend.append((label, color))

    def line(self, xs, ys, color, label=None, width=1.5):
        self._items.append(("line", list(xs), list(ys), color, width))
        if label:
            self._legend.append((label, color))

    def ribbon(self, xs, lo, hi, color, opacity=0.2):
        self._items.append(("ribbon", list(xs), list(lo), list(hi), color, opacity))

    def _ymax(self) -> float:
        vals = []
        for item in self._items:
            if item[0] == "bars" or item[0] == "line":
                vals += item[2]
            else:
                vals += item[3]
        vals = [v for v in vals if v is not None and math.isfinite(v)]
        return _nice_max(max(vals) if vals else 1.0)

    def _sx(self, v):
        x0, x1 = self.xlim
        return self.x + (v - x0) / (x1 - x0) * self.w

    def _sy(self, v):
        y0, y1 = self.ylim
        return self.y + self.h - (v - y0) / (y1 - y0) * self.h

    def render(self) -> List[str]:
        if self.ylim is None:
            self.ylim = (0.0, self._ymax())
        out = [
            f'<rect x="{_n(self.x)}" y="{_n(self.y)}" width="{_n(self.w)}" height="{_n(self.h)}" '
            'fill="none" stroke="#333" stroke-width="1"/>'
        ]
        for k in range(5):
            fx = self.xlim[0] + k * (self.xlim[1] - self.xlim[0]) / 4
            fy = self.ylim[0] + k * (self.ylim[1] - self.ylim[0]) / 4
            out.append(
                f'<text x="{_n(self._sx(fx))}" y="{_n(self.y + self.h + 14)}" '
                f'text-anchor="middle" font-size="10">{fx:.3g}</text>'
            )
            out.append(
                f'<text x="{_n(self.x - 4)}" y="{_n(self._sy(fy) + 3)}" '
                f'text-anchor="end" font-size="10">{fy:.3g}</text>'
            )
        for item in self._items:
            kind = item[0]
            if kind == "bars":
                _, cs, hs, width, color, op = item
                for c, hgt in zip(cs, hs):
                    if hgt is None or not math.isfinite(hgt) or hgt <= 0:
                        continue
                    x0, x1 = self._sx(c - width / 2), self._sx(c + width / 2)
                    y = self._sy(hgt)
                    out.append(
                        f'<rect x="{_n(x0)}" y="{_n(y)}" width="{_n(x1 - x0)}" '
                        f'height="{_n(self.y + self.h - y)}" fill="{color}" fill-opacity="{op}"/>'
                    )
            elif kind == "line":
                _, xs, ys, color, width = item
                for run in _finite_runs(xs, ys):
                    pts = " ".join(f"{_n(self._sx(a))},{_n(self._sy(b))}" for a, b in run)
                    out.append(
                        f'<polyline points="{pts}" fill="none" stroke="{color}" '
                        f'stroke-width="{width}"/>'
                    )
            else:
                _, xs, lo, hi, color, op = item
                for run in _finite_runs(xs, list(zip(lo, hi))):
                    upper = [f"{_n(self._sx(a))},{_n(self._sy(b[1]))}" for a, b in run]
                    lower = [f"{_n(self._sx(a))},{_n(self._sy(b[0]))}" for a, b in reversed(run)]
                    out.append(
                        f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                        f'fill-opacity="{op}" stroke="none"/>'
                    )
        if self.title:
            out.append(
                f'<text x="{_n(self.x + self.w / 2)}" y="{_n(self.y - 8)}" text-anchor="middle" '
                f'font-size="12">{escape(self.title)}</text>'
            )
        if self.xlabel:
            out.append(
                f'<text x="{_n(self.x + self.w / 2)}" y="{_n(self.y + self.h + 30)}" '
                f'text-anchor="middle" font-size="11">{escape(self.xlabel)}</text>'
            )
        if self.ylabel:
            cx, cy = self.x - 40, self.y + self.h / 2
            out.append(
                f'<text x="{_n(cx)}" y="{_n(cy)}" text-anchor="middle" font-size="11" '
                f'transform="rotate(-90 {_n(cx)} {_n(cy)})">{escape(self.ylabel)}</text>'
            )
        for i, (label, color) in enumerate(self._legend):
            ly = self.y + 12 + 14 * i
            lx = self.x + self.w - 130
            out.append(f'<rect x="{_n(lx)}" y="{_n(ly - 8)}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{_n(lx + 14)}" y="{_n(ly)}" font-size="10">{escape(label)}</text>')
        return out


def _finite_runs(xs, ys):
    run = []
    for x, y in zip(xs, ys):
        vals = y if isinstance(y, tuple) else (y,)
        if all(v is not None and math.isfinite(v) for v in vals):
            run.append((x, y))
        elif run:
            yield run
            run = []
    if run:
        yield run


class Figure:
    def __init__(self, width: int = 640, height: int = 360, title: Optional[str] = None):
        self.width, self.height, self.title = width, height, title
        self.panels: List[Panel] = []

    def panel(self, x, y, w, h, xlim, **kw) -> Panel:
        p = Panel(x, y, w, h, xlim, **kw)
        self.panels.append(p)
        return p

    def render(self) -> str:
        lines = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
        ]
        if self.title:
            lines.append(
                f'<text x="{_n(self.width / 2)}" y="16" text-anchor="middle" font-size="13">'
                f"{escape(self.title)}</text>"
            )
        for p in self.panels:
            lines += p.render()
        lines.append("</svg>")
        return "\n".join(lines) + "\n"


def histogram_figure(binning, series, title="") -> str:
    """First series drawn as bars, the rest as lines over the bin centres."""
    fig = Figure(640, 360, title or None)
    p = fig.panel(70, 40, 540, 270, (binning.label_min, binning.label_max),
                  xlabel="label", ylabel="frames")
    centers = list(binning.centers)
    for i, (label, counts, color) in enumerate(series):
        if i == 0:
            p.bars(centers, list(counts), binning.bin_width, color, label=label)
        else:
            p.line(centers, list(counts), color, label=label)
    return fig.render()


def bench_figure(report: dict, binning) -> str:
    """Distribution overlays on the left; per-bin test MSE with min-max ribbons on the right."""
    runs = report["runs"]
    centers = list(binning.centers)
    xlim = (binning.label_min, binning.label_max)

    def avg(key_fn):
        arr = np.array([[np.nan if v is None else v for v in key_fn(r)] for r in runs], dtype=float)
        with np.errstate(all="ignore"):
            counts = np.sum(np.isfinite(arr), axis=0)
            total = np.nansum(arr, axis=0)
            return [float(t / c) if c else float("nan") for t, c in zip(total, counts)]

    def share(key):
        rows = []
        for r in runs:
            h = np.asarray(r[key], dtype=float)
            rows.append(h / h.sum())
        return list(np.mean(rows, axis=0))

    fig = Figure(1100, 380, "label distributions and per-bin test MSE")
    left = fig.panel(70, 50, 440, 270, xlim, title="training vs test label distribution",
                     xlabel="label", ylabel="share of frames")
    left.line(centers, share("train_hist"), PALETTE["red"], label="train (raw)")
    left.line(centers, share("convolved_train_hist"), PALETTE["blue"], label="train (convolved)")
    left.line(centers, share("test_utopia_hist"), PALETTE["orange"], label="test (utopia)")

    right = fig.panel(620, 50, 440, 270, xlim, title="per-bin test MSE",
                      xlabel="true label", ylabel="squared error")
    colors = {"baseline": PALETTE["red"], "cwl": PALETTE["green"], "tns+cwl": PALETTE["blue"]}
    for name in report["config"]["strategies"]:
        color = colors.get(name, PALETTE["grey"])
        lo = avg(lambda r: r["strategies"][name]["per_bin_mse_min"])
        hi = avg(lambda r: r["strategies"][name]["per_bin_mse_max"])
        right.ribbon(centers, lo, hi, color)
        right.line(centers, avg(lambda r: r["strategies"][name]["per_bin_mse"]), color, label=name)
    return fig.render()
