"""Dependency-free SVG polyline charts for sweep/bench trends."""

from __future__ import annotations

_PALETTE = ("#1f6fb2", "#d1495b", "#2e8b57", "#8a5fbf")
_W, _H = 640, 400
_MARGIN = 60


def _scale(values, lo, hi, out_lo, out_hi):
    span = (hi - lo) or 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def line_chart(series, path, title: str = "", x_label: str = ""):
    """Write a chart of (label, xs, ys) series, each y-normalized to its
    own range (annotated in the legend) so unlike units share one panel."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
    ]
    x0, x1 = _MARGIN, _W - _MARGIN
    y0, y1 = _H - _MARGIN, _MARGIN
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
    )
    all_x = sorted({x for _, xs, _ in series for x in xs})
    if not all_x:
        all_x = [0]
    lo_x, hi_x = min(all_x), max(all_x)
    for tick in all_x:
        px = _scale([tick], lo_x, hi_x, x0, x1)[0]
        parts.append(
            f'<line x1="{px}" y1="{y0}" x2="{px}" y2="{y0 + 5}" stroke="black"/>'
            f'<text x="{px}" y="{y0 + 20}" text-anchor="middle" font-size="11">{tick:g}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2}" y="{_H - 12}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>'
    )
    for idx, (label, xs, ys) in enumerate(series):
        if not xs:
            continue
        color = _PALETTE[idx % len(_PALETTE)]
        lo_y, hi_y = min(ys), max(ys)
        px = _scale(xs, lo_x, hi_x, x0, x1)
        py = _scale(ys, lo_y, hi_y, y0, y1)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for a, b in zip(px, py):
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{x1 - 4}" y="{y1 + 16 * idx + 4}" text-anchor="end" '
            f'font-size="11" fill="{color}">{label} [{lo_y:.4g} .. {hi_y:.4g}]</text>'
        )
    parts.append("</svg>")
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
