"""Minimal deterministic SVG line charts (log-scale y) for traces and bound curves."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
MAX_POINTS = 2000

W, H = 720, 480
LEFT, RIGHT, TOP, BOTTOM = 80, 170, 40, 60


def _thin(xs: Sequence[float], ys: Sequence[float]) -> tuple[list[float], list[float]]:
    n = len(xs)
    if n <= MAX_POINTS:
        return list(xs), list(ys)
    stride = math.ceil(n / MAX_POINTS)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return [xs[i] for i in idx], [ys[i] for i in idx]


def _nice_step(span: float, target: int = 6) -> float:
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1, 2, 5, 10):
        if mult * mag >= raw:
            return mult * mag
    return 10 * mag


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}"


def line_chart(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    *,
    title: str = "",
    xlabel: str = "wall-clock time",
    ylabel: str = "error",
    logy: bool = True,
) -> str:
    """Render ``(name, xs, ys)`` series. With ``logy`` non-positive or
    non-finite y values are skipped (they break the line)."""
    if not series:
        raise ValueError("nothing to plot")
    pts = []
    for name, xs, ys in series:
        if len(xs) != len(ys):
            raise ValueError(f"series {name!r}: x and y lengths differ")
        xs, ys = _thin(xs, ys)
        ok = [
            (x, y)
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy)
        ]
        pts.append((name, xs, ys, ok))
    all_ok = [p for *_, ok in pts for p in ok]
    if not all_ok:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 1.0, 10.0
    else:
        x_lo = min(0.0, min(x for x, _ in all_ok))
        x_hi = max(x for x, _ in all_ok)
        y_vals = [y for _, y in all_ok]
        y_lo, y_hi = min(y_vals), max(y_vals)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if logy:
        y_lo, y_hi = math.floor(math.log10(y_lo)), math.ceil(math.log10(y_hi))
        if y_hi <= y_lo:
            y_hi = y_lo + 1
    elif y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        v = math.log10(y) if logy else y
        return TOP + ph - (v - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{W / 2 - RIGHT / 2:.0f}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>')

    step = _nice_step(x_hi - x_lo)
    tick = math.ceil(x_lo / step) * step
    while tick <= x_hi + 1e-9 * step:
        x = px(tick)
        out.append(f'<line x1="{_num(x)}" y1="{TOP + ph}" x2="{_num(x)}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_num(x)}" y="{TOP + ph + 20}" text-anchor="middle" font-size="11">{_tick_label(tick)}</text>')
        tick += step
    if logy:
        for e in range(int(y_lo), int(y_hi) + 1):
            y = py(10.0**e)
            out.append(f'<line x1="{LEFT}" y1="{_num(y)}" x2="{LEFT + pw}" y2="{_num(y)}" stroke="#dddddd"/>')
            out.append(f'<text x="{LEFT - 8}" y="{_num(y + 4)}" text-anchor="end" font-size="11">1e{e}</text>')
    else:
        ystep = _nice_step(y_hi - y_lo)
        tick = math.ceil(y_lo / ystep) * ystep
        while tick <= y_hi + 1e-9 * ystep:
            y = py(tick)
            out.append(f'<line x1="{LEFT}" y1="{_num(y)}" x2="{LEFT + pw}" y2="{_num(y)}" stroke="#dddddd"/>')
            out.append(f'<text x="{LEFT - 8}" y="{_num(y + 4)}" text-anchor="end" font-size="11">{_tick_label(tick)}</text>')
            tick += ystep
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{H - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.0f})">{escape(ylabel)}</text>'
    )

    for i, (name, xs, ys, _) in enumerate(pts):
        color = PALETTE[i % len(PALETTE)]
        run: list[str] = []
        runs = []
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y) and (y > 0 or not logy):
                run.append(f"{_num(px(x))},{_num(py(y))}")
            elif run:
                runs.append(run)
                run = []
        if run:
            runs.append(run)
        for r in runs:
            if len(r) == 1:
                cx, cy = r[0].split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>')
            else:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(r)}"/>')
        ly = TOP + 14 + 18 * i
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 42}" y="{ly + 4}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
