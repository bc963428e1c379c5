"""Minimal deterministic SVG line charts (no renderer, fixed number formatting)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH, HEIGHT = 800, 500
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 50


def _fmt(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, n=6):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def line_chart(series, title="", xlabel="", ylabel="", logy=False, hlines=()):
    """Render `series` as an SVG document string.

    Parameters
    ----------
    series : list of (label, xs, ys)
        One polyline per entry. Non-finite points (and non-positive ones on
        a log axis) split the polyline.
    hlines : list of (label, y)
        Horizontal reference lines, e.g. a limit.
    """
    def ty(v):
        return math.log10(v) if logy else v

    def ok(v):
        return math.isfinite(v) and (v > 0 if logy else True)

    xs_all = [x for _, xs, ys in series for x, y in zip(xs, ys) if ok(y) and math.isfinite(x)]
    ys_all = [ty(y) for _, xs, ys in series for y in ys if ok(y)] + [ty(y) for _, y in hlines if ok(y)]
    x0, x1 = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y0, y1 = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def py(yt):
        return MARGIN_T + ph - (yt - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(title)}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>',
    ]
    for t in _nice_ticks(x0, x1):
        x = px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{MARGIN_T}" x2="{_fmt(x)}" y2="{MARGIN_T + ph}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{_fmt(x)}" y="{MARGIN_T + ph + 16}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{t:g}</text>')
    if logy:
        yticks = list(range(math.floor(y0), math.ceil(y1) + 1))
        ylabels = [f"1e{k}" for k in yticks]
    else:
        yticks = _nice_ticks(y0, y1)
        ylabels = [f"{t:g}" for t in yticks]
    for t, lab in zip(yticks, ylabels):
        if not (y0 - 1e-9 <= t <= y1 + 1e-9):
            continue
        y = py(t)
        out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(y)}" x2="{MARGIN_L + pw}" y2="{_fmt(y)}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{lab}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="12" transform="rotate(-90 16 {MARGIN_T + ph / 2:.0f})">{escape(ylabel)}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        runs, cur = [], []
        for x, y in zip(xs, ys):
            if ok(y) and math.isfinite(x):
                cur.append(f"{_fmt(px(x))},{_fmt(py(ty(y)))}")
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        out.append(f'<g class="series" data-label="{escape(str(label))}">')
        for run in runs:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(run)}"/>')
        out.append("</g>")
        ly = MARGIN_T + 14 * i + 8
        if ly < HEIGHT - MARGIN_B:
            out.append(f'<line x1="{WIDTH - MARGIN_R + 10}" y1="{ly}" x2="{WIDTH - MARGIN_R + 30}" y2="{ly}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{WIDTH - MARGIN_R + 34}" y="{ly + 4}" font-family="sans-serif" '
                       f'font-size="10">{escape(str(label))}</text>')
    for label, y in hlines:
        if ok(y):
            yy = py(ty(y))
            out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(yy)}" x2="{MARGIN_L + pw}" y2="{_fmt(yy)}" '
                       f'stroke="#ff0000" stroke-width="2"><title>{escape(label)}</title></line>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
