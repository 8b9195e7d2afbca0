"""Hand-rolled SVG renderer for PR-curve families.

Plain text SVG keeps plot goldens diffable; no plotting library versions can
shift the bytes.
"""

from __future__ import annotations

import os
from typing import Mapping

from .evaluation import PRCurve
from .imgcore import ValidationError

_WIDTH, _HEIGHT = 640, 480
_MARGIN_LEFT, _MARGIN_RIGHT = 60, 20
_MARGIN_TOP, _MARGIN_BOTTOM = 20, 50
_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
    "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
)


def _px(recall: float, precision: float) -> tuple[float, float]:
    x = _MARGIN_LEFT + recall * (_WIDTH - _MARGIN_LEFT - _MARGIN_RIGHT)
    y = _HEIGHT - _MARGIN_BOTTOM - precision * (_HEIGHT - _MARGIN_TOP - _MARGIN_BOTTOM)
    return x, y


def render_pr_svg(curves: Mapping[str, PRCurve]) -> str:
    """Render curves on [0,1]x[0,1] axes with a legend of names and AP values.

    Sentinel curves (no ground truth) are omitted from the plot area and
    noted in the legend.
    """
    if not curves:
        raise ValidationError("no curves to plot")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
    ]
    x0, y0 = _px(0.0, 0.0)
    x1, y1 = _px(1.0, 1.0)
    for i in range(6):
        t = i / 5.0
        gx, _ = _px(t, 0.0)
        _, gy = _px(0.0, t)
        parts.append(
            f'<line x1="{gx:.2f}" y1="{y0:.2f}" x2="{gx:.2f}" y2="{y1:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{x0:.2f}" y1="{gy:.2f}" x2="{x1:.2f}" y2="{gy:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{gx:.2f}" y="{y0 + 20:.2f}" font-size="12" '
            f'text-anchor="middle" font-family="sans-serif">{t:.1f}</text>'
        )
        parts.append(
            f'<text x="{x0 - 8:.2f}" y="{gy + 4:.2f}" font-size="12" '
            f'text-anchor="end" font-family="sans-serif">{t:.1f}</text>'
        )
    parts.append(
        f'<rect x="{x0:.2f}" y="{y1:.2f}" width="{x1 - x0:.2f}" height="{y0 - y1:.2f}" '
        f'fill="none" stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{(x0 + x1) / 2:.2f}" y="{_HEIGHT - 12:.2f}" font-size="14" '
        f'text-anchor="middle" font-family="sans-serif">Recall</text>'
    )
    parts.append(
        f'<text x="16" y="{(y0 + y1) / 2:.2f}" font-size="14" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">'
        f'Precision</text>'
    )

    legend_x = x0 + 12
    legend_y = y1 + 16
    for i, (name, curve) in enumerate(curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        if curve.defined:
            coords = " ".join(
                f"{px:.2f},{py:.2f}"
                for px, py in (
                    _px(float(r), float(p))
                    for r, p in zip(curve.recalls, curve.precisions)
                )
            )
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="2"/>'
            )
            label = f"{name} (AP={curve.ap:.3f})"
        else:
            label = f"{name} (AP=n/a, omitted)"
        ly = legend_y + 18 * i
        parts.append(
            f'<line x1="{legend_x:.2f}" y1="{ly - 4:.2f}" x2="{legend_x + 24:.2f}" '
            f'y2="{ly - 4:.2f}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{legend_x + 30:.2f}" y="{ly:.2f}" font-size="12" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_pr_plot(curves: Mapping[str, PRCurve], path: str | os.PathLike) -> None:
    """Write the curve family as an SVG file."""
    svg = render_pr_svg(curves)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
