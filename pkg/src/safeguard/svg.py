"""Minimal self-contained SVG renderers: trade-off scatter, radar and heatmap."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _doc(width, height, body, title=""):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    parts = [head, f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        parts.append(f'<title>{escape(title)}</title>')
        parts.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13" '
                     f'font-family="sans-serif">{escape(title)}</text>')
    parts += body
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _fmt(v) -> str:
    return f"{v:.2f}"


def tradeoff(sweeps, title: str = "", width: int = 420, height: int = 380) -> str:
    """Scatter of (efficiency, safety) per sweep with the hull drawn as a polyline."""
    left, top, right, bottom = 50, 30, 20, 45
    pw, ph = width - left - right, height - top - bottom

    def px(x, y):
        return left + x * pw, top + (1 - y) * ph

    body = [f'<rect class="frame" x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in range(6):
        v = t / 5
        x, _ = px(v, 0)
        _, y = px(0, v)
        body.append(f'<text x="{_fmt(x)}" y="{top + ph + 14}" font-size="10" text-anchor="middle">{v:.1f}</text>')
        body.append(f'<text x="{left - 6}" y="{_fmt(y + 3)}" font-size="10" text-anchor="end">{v:.1f}</text>')
    body.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" font-size="11" text-anchor="middle">'
                f'efficiency</text>')
    body.append(f'<text x="12" y="{top + ph / 2:.1f}" font-size="11" text-anchor="middle" '
                f'transform="rotate(-90 12 {top + ph / 2:.1f})">safety</text>')
    for k, s in enumerate(sweeps):
        color = PALETTE[k % len(PALETTE)]
        for p in s.points:
            if not p.valid:
                continue
            x, y = px(p.efficiency, p.safety)
            stroke = ' stroke="black"' if p.flagged else ""
            body.append(f'<circle class="point" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}" '
                        f'fill-opacity="0.6"{stroke}><title>{escape(s.algorithm)} param={p.param:g}</title>'
                        f'</circle>')
        if s.hull:
            pts = " ".join("%s,%s" % tuple(map(_fmt, px(p.efficiency, p.safety))) for p in s.hull)
            body.append(f'<polyline class="hull" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{left + pw - 4}" y="{top + 14 + 13 * k}" font-size="11" text-anchor="end" '
                    f'fill="{color}">{escape(s.algorithm)}</text>')
    return _doc(width, height, body, title)


def radar(series: dict, axes=("J_arm", "J_base", "M_self", "M_env"), title: str = "",
          size: int = 380) -> str:
    """One closed polygon per series over the given axes, values in [0, 1]."""
    cx = cy = size / 2
    r = size / 2 - 60
    n = len(axes)

    def at(i, v):
        a = -math.pi / 2 + 2 * math.pi * i / n
        return cx + r * v * math.cos(a), cy + 10 + r * v * math.sin(a)

    body = []
    for ring in (0.25, 0.5, 0.75, 1.0):
        body.append(f'<circle class="ring" cx="{_fmt(cx)}" cy="{_fmt(cy + 10)}" r="{_fmt(r * ring)}" '
                    f'fill="none" stroke="#ddd"/>')
    for i, name in enumerate(axes):
        x, y = at(i, 1.0)
        lx, ly = at(i, 1.15)
        body.append(f'<line class="axis" x1="{_fmt(cx)}" y1="{_fmt(cy + 10)}" x2="{_fmt(x)}" y2="{_fmt(y)}" '
                    f'stroke="#888"/>')
        body.append(f'<text x="{_fmt(lx)}" y="{_fmt(ly + 4)}" font-size="11" text-anchor="middle">'
                    f'{escape(name)}</text>')
    for k, (label, vals) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join("%s,%s" % tuple(map(_fmt, at(i, min(max(v, 0.0), 1.0)))) for i, v in enumerate(vals))
        body.append(f'<polygon class="series" points="{pts}" fill="{color}" fill-opacity="0.15" '
                    f'stroke="{color}"><title>{escape(label)}</title></polygon>')
        body.append(f'<text x="8" y="{36 + 13 * k}" font-size="11" fill="{color}">{escape(label)}</text>')
    return _doc(size, size + 20, body, title)


def heatmap(labels, values, title: str = "", cell: int = 56) -> str:
    """Square matrix of values in [0, 1]; NaN cells are grey."""
    n = len(labels)
    left, top = 60, 40
    body = []
    for i in range(n):
        body.append(f'<text x="{left - 6}" y="{top + cell * i + cell / 2 + 4:.1f}" font-size="11" '
                    f'text-anchor="end">{escape(labels[i])}</text>')
        body.append(f'<text x="{left + cell * i + cell / 2:.1f}" y="{top + cell * n + 14}" font-size="11" '
                    f'text-anchor="middle">{escape(labels[i])}</text>')
        for j in range(n):
            v = float(values[i][j])
            if math.isnan(v):
                fill, text = "#cccccc", "NA"
            else:
                shade = int(round(255 * (1 - v)))
                fill, text = f"rgb({shade},{shade},255)", f"{v:.2f}"
            x, y = left + cell * j, top + cell * i
            body.append(f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" '
                        f'stroke="white"/>')
            ink = "white" if not math.isnan(v) and v > 0.6 else "black"
            body.append(f'<text x="{x + cell / 2:.1f}" y="{y + cell / 2 + 4:.1f}" font-size="11" '
                        f'text-anchor="middle" fill="{ink}">{text}</text>')
    return _doc(left + cell * n + 20, top + cell * n + 30, body, title)
