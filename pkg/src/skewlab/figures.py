"""Hand-rolled SVG renderings: confusion heatmap and prediction histogram.

Plain string assembly, no plotting dependency; output is well-formed XML.
"""

from xml.sax.saxutils import escape

import numpy as np

CELL = 28
MARGIN = 60
BAR_W = 26
BAR_AREA_H = 220


def _svg(width, height, body, title):
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<title>{escape(title)}</title>\n'
        f'{body}'
        '</svg>\n'
    )


def _heat_color(v):
    # white -> red ramp for v in [0, 1]
    v = min(max(float(v), 0.0), 1.0)
    g = int(round(255 * (1.0 - v)))
    return f"rgb(255,{g},{g})"


def confusion_svg(matrix, title="confusion"):
    """Row-normalized confusion matrix as a heatmap; rows = true class."""
    m = np.asarray(matrix, dtype=np.float64)
    n = m.shape[0]
    width = MARGIN + n * CELL + 20
    height = MARGIN + n * CELL + 20
    parts = [f'<text x="{MARGIN}" y="20" font-size="13">{escape(title)}</text>\n']
    for i in range(n):
        parts.append(
            f'<text x="{MARGIN - 8}" y="{MARGIN + i * CELL + CELL * 0.65:.0f}" '
            f'font-size="10" text-anchor="end">{i + 1}</text>\n'
        )
        parts.append(
            f'<text x="{MARGIN + i * CELL + CELL / 2:.0f}" y="{MARGIN - 8}" '
            f'font-size="10" text-anchor="middle">{i + 1}</text>\n'
        )
        for j in range(n):
            x = MARGIN + j * CELL
            y = MARGIN + i * CELL
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{_heat_color(m[i, j])}" stroke="#999" stroke-width="0.5"/>\n'
            )
            if m[i, j] >= 0.005:
                parts.append(
                    f'<text x="{x + CELL / 2:.0f}" y="{y + CELL * 0.65:.0f}" '
                    f'font-size="8" text-anchor="middle">{m[i, j]:.2f}</text>\n'
                )
    return _svg(width, height, "".join(parts), title)


def histogram_svg(counts, title="prediction histogram"):
    """Per-class prediction counts as vertical bars."""
    c = np.asarray(counts, dtype=np.float64)
    n = c.size
    top = max(c.max(), 1.0)
    width = MARGIN + n * (BAR_W + 6) + 20
    height = MARGIN + BAR_AREA_H + 40
    parts = [f'<text x="{MARGIN}" y="20" font-size="13">{escape(title)}</text>\n']
    base = MARGIN + BAR_AREA_H
    for k in range(n):
        h = BAR_AREA_H * c[k] / top
        x = MARGIN + k * (BAR_W + 6)
        parts.append(
            f'<rect x="{x}" y="{base - h:.1f}" width="{BAR_W}" height="{h:.1f}" '
            f'fill="rgb(70,130,180)" stroke="#333" stroke-width="0.5"/>\n'
        )
        parts.append(
            f'<text x="{x + BAR_W / 2:.0f}" y="{base + 14}" font-size="10" '
            f'text-anchor="middle">{k + 1}</text>\n'
        )
        parts.append(
            f'<text x="{x + BAR_W / 2:.0f}" y="{base - h - 4:.1f}" font-size="9" '
            f'text-anchor="middle">{int(c[k])}</text>\n'
        )
    return _svg(width, height, "".join(parts), title)


def write_svg(path, text):
    with open(str(path), "w") as fh:
        fh.write(text)
