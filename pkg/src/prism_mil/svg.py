"""Static SVG step plots for survival curves (plain string output)."""
from __future__ import annotations

from xml.sax.saxutils import escape

COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _step_points(times, survival, t_max):
    pts = [(0.0, 1.0)]
    level = 1.0
    for t, s in zip(times, survival):
        pts.append((float(t), level))
        level = float(s)
        pts.append((float(t), level))
    pts.append((t_max, level))
    return pts


def km_svg(curves, width: int = 480, height: int = 320, title: str = "") -> str:
    """Render ``[(label, SurvivalCurve), ...]`` as a Kaplan-Meier step plot."""
    margin = 40
    t_max = max([float(c.times[-1]) for _, c in curves if len(c.times)] + [1.0])
    sx = (width - 2 * margin) / t_max
    sy = height - 2 * margin

    def xy(t, s):
        return f"{margin + t * sx:.2f},{height - margin - s * sy:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" text-anchor="middle">months</text>',
        f'<text x="{margin - 6}" y="{margin + 4}" font-size="10" text-anchor="end">1.0</text>',
        f'<text x="{margin - 6}" y="{height - margin + 4}" font-size="10" text-anchor="end">0.0</text>',
        f'<text x="{width - margin}" y="{height - margin + 14}" font-size="10" text-anchor="end">{t_max:g}</text>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.0f}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    for i, (label, curve) in enumerate(curves):
        colour = COLOURS[i % len(COLOURS)]
        pts = " ".join(xy(t, s) for t, s in _step_points(curve.times, curve.survival, t_max))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        y = margin + 14 * i
        parts.append(f'<text x="{width - margin}" y="{y}" font-size="11" fill="{colour}" '
                     f'text-anchor="end">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
