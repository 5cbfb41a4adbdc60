"""Minimal standalone SVG line charts (stacked panels, shared x axis)."""

import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"]


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.1e}"
    return f"{v:.3g}"


def _range(values):
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        pad = max(abs(hi) * 0.1, 1e-9)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(panels, width=800, panel_height=220, title=None, xlabel="t"):
    """Render ``panels`` as a vertical stack of line plots.

    Each panel is ``{"title": str, "x": seq, "series": [(label, seq), ...]}``
    and may set ``"log": True`` for a base-10 y axis (nonpositive values are
    dropped). Returns the SVG document as a string.
    """
    left, right, top_pad, bottom_pad = 70, 150, 30, 35
    head = 30 if title else 0
    height = head + len(panels) * panel_height
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    pw = width - left - right
    for k, panel in enumerate(panels):
        y0 = head + k * panel_height + top_pad
        ph = panel_height - top_pad - bottom_pad
        xs = [float(x) for x in panel["x"]]
        logy = panel.get("log", False)

        def tr(v, logy=logy):
            if logy:
                return math.log10(v) if v > 0 else math.nan
            return float(v)

        ys_all = [tr(v) for _, ys in panel["series"] for v in ys]
        ylo, yhi = _range(ys_all)
        xlo, xhi = (min(xs), max(xs)) if xs else (0.0, 1.0)
        if xhi <= xlo:
            xhi = xlo + 1.0

        def px(x, xlo=xlo, xhi=xhi):
            return left + (x - xlo) / (xhi - xlo) * pw

        def py(y, ylo=ylo, yhi=yhi, y0=y0, ph=ph):
            return y0 + (1.0 - (y - ylo) / (yhi - ylo)) * ph

        out.append(f'<rect x="{left}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
        out.append(f'<text x="{left}" y="{y0 - 8}">{escape(panel.get("title", ""))}</text>')
        for i in range(5):
            yv = ylo + (yhi - ylo) * i / 4
            label = _tick_label(10 ** yv if logy else yv)
            out.append(f'<line x1="{left - 4}" y1="{_fmt(py(yv))}" x2="{left}" y2="{_fmt(py(yv))}" stroke="#444"/>')
            out.append(f'<text x="{left - 6}" y="{_fmt(py(yv) + 4)}" text-anchor="end">{label}</text>')
            xv = xlo + (xhi - xlo) * i / 4
            out.append(f'<text x="{_fmt(px(xv))}" y="{y0 + ph + 14}" text-anchor="middle">{_tick_label(xv)}</text>')
        out.append(f'<text x="{left + pw / 2:.0f}" y="{y0 + ph + 28}" text-anchor="middle">{escape(xlabel)}</text>')
        for j, (label, ys) in enumerate(panel["series"]):
            color = PALETTE[j % len(PALETTE)]
            pts = []
            segs = []
            for x, y in zip(xs, ys):
                yt = tr(y)
                if math.isfinite(yt):
                    pts.append(f"{_fmt(px(x))},{_fmt(py(yt))}")
                elif pts:
                    segs.append(pts)
                    pts = []
            if pts:
                segs.append(pts)
            for seg in segs:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(seg)}"/>')
            ly = y0 + 12 + 14 * j
            out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{left + pw + 32}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
