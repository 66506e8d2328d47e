"""Minimal SVG line plot, no plotting dependency. Output bytes are a pure
function of the inputs, which keeps plot files reproducible."""

from __future__ import annotations


def polyline_svg(xs, ys, xlabel: str, ylabel: str, title: str = "", width: int = 640, height: int = 420) -> str:
    if len(xs) != len(ys) or len(xs) == 0:
        raise ValueError("polyline needs matching non-empty x/y sequences")
    margin_left, margin_right, margin_top, margin_bottom = 70, 20, 30, 50
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0
    y_pad = 0.05 * (y_max - y_min)
    y_min -= y_pad
    y_max += y_pad

    def px(x: float) -> float:
        return margin_left + (x - x_min) / (x_max - x_min) * plot_w

    def py(y: float) -> float:
        return margin_top + (y_max - y) / (y_max - y_min) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14" '
            f'font-family="sans-serif">{title}</text>'
        )
    # axes
    x0, y0 = px(x_min), py(y_min)
    parts.append(
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" y2="{y0:.1f}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{margin_left}" y1="{y0:.1f}" x2="{px(x_max):.1f}" y2="{y0:.1f}" stroke="black"/>'
    )
    # x ticks at the data points, y ticks at 5 even stops
    for x in xs:
        parts.append(f'<line x1="{px(x):.1f}" y1="{y0:.1f}" x2="{px(x):.1f}" y2="{y0 + 5:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{px(x):.1f}" y="{y0 + 18:.1f}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{x:.4g}</text>'
        )
    for k in range(5):
        y = y_min + (y_max - y_min) * k / 4
        parts.append(f'<line x1="{margin_left - 5}" y1="{py(y):.1f}" x2="{margin_left}" y2="{py(y):.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{margin_left - 8}" y="{py(y) + 4:.1f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{y:.4g}</text>'
        )
    points = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{points}" fill="none" stroke="#1f6fb2" stroke-width="2"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="#1f6fb2"/>')
    parts.append(
        f'<text x="{margin_left + plot_w / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{margin_top + plot_h / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {margin_top + plot_h / 2:.1f})">{ylabel}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
