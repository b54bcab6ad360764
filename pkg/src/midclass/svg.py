"""Minimal deterministic SVG charts.

Coordinates are printed with fixed precision and elements are emitted in
input order, so identical data always yields identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

W, H = 640, 480
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
PALETTE = ("#1f3b73", "#c2452d", "#3f8f4f", "#8a5aa8", "#b8860b", "#2b8a9a", "#555555")


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(round(t, 10)) for t in np.arange(start, hi + step * 1e-9, step)]


@dataclass
class Chart:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlim: Optional[Tuple[float, float]] = None
    ylim: Optional[Tuple[float, float]] = None
    _items: List[Tuple] = field(default_factory=list)
    _xs: List[float] = field(default_factory=list)
    _ys: List[float] = field(default_factory=list)

    def _track(self, x, y):
        self._xs.extend(float(v) for v in np.ravel(x) if np.isfinite(v))
        self._ys.extend(float(v) for v in np.ravel(y) if np.isfinite(v))

    def scatter(self, x, y, color=PALETTE[0], r=2.5, fill=True):
        self._items.append(("scatter", np.asarray(x, float), np.asarray(y, float), color, r, fill))
        self._track(x, y)
        return self

    def line(self, x, y, color=PALETTE[0], width=1.5, dash=None, label=None):
        self._items.append(("line", np.asarray(x, float), np.asarray(y, float), color, width, dash, label))
        self._track(x, y)
        return self

    def whiskers(self, x, lo, hi, color=PALETTE[0]):
        self._items.append(("whisk", np.asarray(x, float), np.asarray(lo, float), np.asarray(hi, float), color))
        self._track(x, lo)
        self._track(x, hi)
        return self

    def hline(self, y, color="#999999", dash="4,3"):
        self._items.append(("hline", float(y), color, dash))
        return self

    def vline(self, x, color="#999999", dash="4,3"):
        self._items.append(("vline", float(x), color, dash))
        return self

    def text(self, x_frac, y_frac, s):
        self._items.append(("text", float(x_frac), float(y_frac), str(s)))
        return self

    # ------------------------------------------------------------------
    def _limits(self):
        def lim(vals, given):
            if given is not None:
                return given
            if not vals:
                return (0.0, 1.0)
            lo, hi = min(vals), max(vals)
            pad = (hi - lo) * 0.05 or max(abs(lo) * 0.05, 0.5)
            return (lo - pad, hi + pad)

        return lim(self._xs, self.xlim), lim(self._ys, self.ylim)

    def render(self) -> str:
        (x0, x1), (y0, y1) = self._limits()
        left, right, top, bottom = MARGIN
        pw, ph = W - left - right, H - top - bottom

        def X(v):
            return left + (v - x0) / (x1 - x0) * pw

        def Y(v):
            return top + ph - (v - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
            'font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333333"/>',
        ]
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{_f(X(t))}" y1="{top + ph}" x2="{_f(X(t))}" y2="{top + ph + 4}" stroke="#333333"/>')
            out.append(f'<text x="{_f(X(t))}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
        for t in _ticks(y0, y1):
            out.append(f'<line x1="{left - 4}" y1="{_f(Y(t))}" x2="{left}" y2="{_f(Y(t))}" stroke="#333333"/>')
            out.append(f'<text x="{left - 6}" y="{_f(Y(t) + 4)}" text-anchor="end">{t:g}</text>')
        if self.title:
            out.append(f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{left + pw / 2:.0f}" y="{H - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{top + ph / 2:.0f}" text-anchor="middle" '
                       f'transform="rotate(-90 14 {top + ph / 2:.0f})">{escape(self.ylabel)}</text>')
        legend_y = top + 14
        for item in self._items:
            kind = item[0]
            if kind == "scatter":
                _, xs, ys, color, r, fill = item
                paint = f'fill="{color}"' if fill else f'fill="none" stroke="{color}"'
                for a, b in zip(xs, ys):
                    if np.isfinite(a) and np.isfinite(b):
                        out.append(f'<circle cx="{_f(X(a))}" cy="{_f(Y(b))}" r="{r}" {paint}/>')
            elif kind == "line":
                _, xs, ys, color, width, dash, label = item
                pts = " ".join(f"{_f(X(a))},{_f(Y(b))}" for a, b in zip(xs, ys) if np.isfinite(a) and np.isfinite(b))
                d = f' stroke-dasharray="{dash}"' if dash else ""
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{d}/>')
                if label:
                    out.append(f'<line x1="{left + pw - 150}" y1="{legend_y - 4}" x2="{left + pw - 130}" '
                               f'y2="{legend_y - 4}" stroke="{color}" stroke-width="{width}"{d}/>')
                    out.append(f'<text x="{left + pw - 125}" y="{legend_y}">{escape(label)}</text>')
                    legend_y += 14
            elif kind == "whisk":
                _, xs, lo, hi, color = item
                for a, l, h in zip(xs, lo, hi):
                    if np.isfinite(a) and np.isfinite(l) and np.isfinite(h):
                        out.append(f'<line x1="{_f(X(a))}" y1="{_f(Y(l))}" x2="{_f(X(a))}" y2="{_f(Y(h))}" stroke="{color}"/>')
            elif kind == "hline":
                _, v, color, dash = item
                if y0 <= v <= y1:
                    out.append(f'<line x1="{left}" y1="{_f(Y(v))}" x2="{left + pw}" y2="{_f(Y(v))}" '
                               f'stroke="{color}" stroke-dasharray="{dash}"/>')
            elif kind == "vline":
                _, v, color, dash = item
                if x0 <= v <= x1:
                    out.append(f'<line x1="{_f(X(v))}" y1="{top}" x2="{_f(X(v))}" y2="{top + ph}" '
                               f'stroke="{color}" stroke-dasharray="{dash}"/>')
            elif kind == "text":
                _, fx, fy, s = item
                out.append(f'<text x="{_f(left + fx * pw)}" y="{_f(top + fy * ph)}">{escape(s)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.render(), encoding="utf-8")
        return path


def share_scatter(gini, share, p, q, fit=None) -> Chart:
    """Interval share against inequality with the fitted line and its slope and R²."""
    ch = Chart(title=f"Income share of ({p},{q})", xlabel="inequality", ylabel=f"S({p},{q})")
    ch.scatter(gini, share)
    if fit is not None:
        xs = np.array([np.min(gini), np.max(gini)])
        ch.line(xs, fit.intercept + fit.slope * xs, color=PALETTE[1])
        ch.text(0.03, 0.06, f"slope = {fit.slope:.4f}   R2 = {fit.r_squared:.3f}")
    return ch


def beta_triangle(surface, frontier: Sequence[Tuple[int, Optional[float]]] = ()) -> Chart:
    """(p, q) triangle: filled dark points for beta > 0, light for beta < 0, frontier overlaid."""
    ch = Chart(title=f"beta map ({surface.inequality_kind})", xlabel="p", ylabel="q",
               xlim=(-2, 102), ylim=(-2, 102))
    pos = surface.beta > 0
    neg = surface.beta < 0
    ch.scatter(surface.p[pos], surface.q[pos], color="#111111", r=1.2)
    ch.scatter(surface.p[neg], surface.q[neg], color="#bbbbbb", r=1.2)
    pts = [(p, q) for p, q in frontier if q is not None]
    if pts:
        a = np.array(pts, dtype=float)
        ch.line(a[:, 0], a[:, 1], color=PALETTE[1], width=2.0, label="beta = 0")
    return ch


def dot_whisker(labels: Sequence[str], coef, lo, hi, separator_after: Optional[int] = None, title="") -> Chart:
    """Coefficients with confidence bars; a dashed vertical line after position ``separator_after``."""
    x = np.arange(1, len(labels) + 1, dtype=float)
    ch = Chart(title=title, xlabel="definition", ylabel="coefficient", xlim=(0.3, len(labels) + 0.7))
    ch.hline(0.0)
    ch.whiskers(x, lo, hi)
    ch.scatter(x, coef, color=PALETTE[1], r=3.5)
    for i, lab in enumerate(labels):
        ch.text((x[i] - 0.3) / (len(labels) + 0.4) - 0.02, 0.03 + 0.04 * (i % 2), lab)
    if separator_after is not None:
        ch.vline(separator_after + 0.5)
    return ch
