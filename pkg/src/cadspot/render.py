"""Static SVG overlays: the raster as an embedded PNG layer with
keypoint markers (one color per class) and symbol outlines on top.

Coordinates are pixel indices; markers are drawn at pixel centers.
Elements whose coordinates fall outside the raster are still emitted
(the SVG viewBox clips them) but a warning reports how many.
"""

from __future__ import annotations

import base64
import io
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .primitives import Keypoint, RectangleSymbol

# one color per keypoint class 1..15
PALETTE = (
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231",
    "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
    "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000",
)

SYMBOL_COLORS = {"block": "#1f77b4", "wall": "#d62728", "scale": "#2ca02c"}


def class_color(type_id: int) -> str:
    if not 1 <= type_id <= len(PALETTE):
        raise ValueError(f"type_id {type_id} outside 1..{len(PALETTE)}")
    return PALETTE[type_id - 1]


def _png_data_uri(raster: np.ndarray) -> str:
    arr = np.asarray(raster)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("raster must be a 2-D uint8 array")
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def render_overlay(
    raster: np.ndarray,
    keypoints: Sequence[Keypoint] = (),
    symbols: Sequence[RectangleSymbol] = (),
    path: str | Path = "overlay.svg",
    point_radius: float = 3.0,
) -> Path:
    """Write the overlay SVG and return its path."""
    h, w = np.asarray(raster).shape
    parts: list[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<image href="{_png_data_uri(raster)}" width="{w}" height="{h}" '
        f'image-rendering="pixelated"/>',
    ]
    clipped = 0

    for s in symbols:
        pts = []
        for kp in s.keypoints:
            if not (0 <= kp.x < w and 0 <= kp.y < h):
                clipped += 1
            pts.append(f"{kp.x + 0.5:.2f},{kp.y + 0.5:.2f}")
        color = SYMBOL_COLORS.get(s.symbol_class, "#7f7f7f")
        tag = "polygon" if len(pts) >= 3 else "polyline"
        parts.append(
            f'<{tag} points="{" ".join(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"><title>{s.symbol_class}</title></{tag}>'
        )

    for kp in keypoints:
        if not (0 <= kp.x < w and 0 <= kp.y < h):
            clipped += 1
        parts.append(
            f'<circle cx="{kp.x + 0.5:.2f}" cy="{kp.y + 0.5:.2f}" r="{point_radius}" '
            f'fill="{class_color(kp.type_id)}" fill-opacity="0.65" stroke="black" '
            f'stroke-width="0.4"><title>type {kp.type_id} '
            f"score {kp.score:.3f}</title></circle>"
        )

    parts.append("</svg>")
    if clipped:
        warnings.warn(
            f"{clipped} overlay element(s) lie outside the {w}x{h} raster and "
            "render clipped",
            stacklevel=2,
        )
    out = Path(path)
    out.write_text("\n".join(parts) + "\n")
    return out
