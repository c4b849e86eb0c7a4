"""Synthetic CAD-scene generator with exact keypoint annotations.

Scenes are binary line drawings on a white canvas: ink is 0,
background is 255, and strokes are hard (no anti-aliasing) so the
emitted ground truth is pixel-exact. Three symbol families exist:

* blocks: axis-aligned rectangles with all sides >= 16 px,
* walls: thin rectangles (one side 8..12 px) that may stand alone or
  attach to the side of a placed rectangle, turning the two touching
  corners into tee junctions on the host edge,
* scales: straight segments with short perpendicular end ticks, plus
  evenly spaced intermediate ticks once the segment is long enough.

Quadruples of blocks sharing edges in a 2x2 grid are placed
occasionally (when at least four blocks are requested) so cross
junctions and shared tee vertices occur in the corpus.

Placement is rejection-sampled with bounded retries; an impossible
spec raises GenerationError rather than silently emitting fewer
symbols. Everything is driven by the spec's rng_seed, so equal specs
produce byte-identical scenes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import raster
from .primitives import (
    BLOCK_MIN_SIDE as _BLOCK_MIN_SIDE,
    WALL_MAX_THICKNESS as _WALL_MAX_THICKNESS,
    Keypoint,
    RectangleSymbol,
    RegionBox,
)
from .taxonomy import (
    CORNER_ARMS_TO_TYPE,
    DOWN,
    KeypointType,
    LEFT,
    N_TYPES,
    RIGHT,
    UP,
)

BORDER_MARGIN = 8        # ink keeps this far from the canvas border
CLEARANCE = 6            # gap between non-attached symbols
JUNCTION_CLEARANCE = 8   # tee points keep this far from host corners and each other
BLOCK_MIN_SIDE = int(_BLOCK_MIN_SIDE)
WALL_MAX_THICKNESS = int(_WALL_MAX_THICKNESS)
WALL_MIN_THICKNESS = 8
WALL_MIN_LENGTH = 16
SCALE_MIN_LENGTH = 16
TICK_HALF = 3            # perpendicular tick reach on each side of a scale line
TICK_SPACING = 16
TICK_MIN_SCALE_LENGTH = 40
TICK_END_CLEARANCE = 8
REGION_BOX_PAD = 3

_PLACEMENT_ATTEMPTS = 200
_SCENE_RESTARTS = 50


class GenerationError(RuntimeError):
    """A scene spec could not be realized within the retry budget."""


class AnnotationError(ValueError):
    """An annotation file violates the schema."""


@dataclass(frozen=True)
class SceneSpec:
    width: int = 256
    height: int = 256
    n_blocks: int = 2
    n_walls: int = 1
    n_scales: int = 1
    min_symbol_size: int = 12
    max_symbol_size: int = 48
    line_width: int = 1
    noise_level: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 64 or self.height < 64:
            raise ValueError("image must be at least 64x64")
        if self.min_symbol_size < 8:
            raise ValueError("min_symbol_size must be >= 8")
        if self.max_symbol_size < self.min_symbol_size:
            raise ValueError("max_symbol_size must be >= min_symbol_size")
        if self.max_symbol_size > min(self.width, self.height) - 2 * BORDER_MARGIN:
            raise ValueError("max_symbol_size too large for the canvas")
        if min(self.n_blocks, self.n_walls, self.n_scales) < 0:
            raise ValueError("symbol counts must be >= 0")
        if self.line_width < 1:
            raise ValueError("line_width must be >= 1")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must lie in [0, 1]")


@dataclass
class AnnotatedImage:
    raster: np.ndarray
    keypoints: list[Keypoint]
    region_boxes: list[RegionBox]
    symbols_gt: list[RectangleSymbol]

    @property
    def height(self) -> int:
        return int(self.raster.shape[0])

    @property
    def width(self) -> int:
        return int(self.raster.shape[1])


# ---------------------------------------------------------------- placement


@dataclass(frozen=True)
class _Rect:
    x0: int
    y0: int
    x1: int
    y1: int
    kind: str  # "block" | "wall"


@dataclass(frozen=True)
class _Scale:
    x0: int
    y0: int
    x1: int
    y1: int  # endpoints; horizontal iff y0 == y1
    ticks: tuple[int, ...]  # intermediate tick positions along the axis

    @property
    def horizontal(self) -> bool:
        return self.y0 == self.y1


def _boxes_clash(a: tuple[int, int, int, int], b: tuple[int, int, int, int], gap: int) -> bool:
    return not (
        a[2] + gap < b[0] or b[2] + gap < a[0] or a[3] + gap < b[1] or b[3] + gap < a[1]
    )


class _Placer:
    def __init__(self, spec: SceneSpec, rng: np.random.Generator) -> None:
        self.spec = spec
        self.rng = rng
        self.rects: list[_Rect] = []
        self.scales: list[_Scale] = []
        # bounding boxes of everything placed, for clearance tests
        self.occupied: list[tuple[int, int, int, int]] = []
        # (rect_index, side) -> attachment spans on that edge
        self.attached: dict[tuple[int, str], list[tuple[int, int]]] = {}

    # -- helpers

    def _fits_canvas(self, box: tuple[int, int, int, int]) -> bool:
        return (
            box[0] >= BORDER_MARGIN
            and box[1] >= BORDER_MARGIN
            and box[2] <= self.spec.width - 1 - BORDER_MARGIN
            and box[3] <= self.spec.height - 1 - BORDER_MARGIN
        )

    def _clear_of_others(
        self, box: tuple[int, int, int, int], skip: Iterable[int] = ()
    ) -> bool:
        skip = set(skip)
        for i, other in enumerate(self.occupied):
            if i in skip:
                continue
            if _boxes_clash(box, other, CLEARANCE):
                return False
        return True

    def _span(self, lo: int, hi: int, size: int) -> int | None:
        if hi - size < lo:
            return None
        return int(self.rng.integers(lo, hi - size + 1))

    def _add_rect(self, rect: _Rect) -> None:
        self.rects.append(rect)
        self.occupied.append((rect.x0, rect.y0, rect.x1, rect.y1))

    # -- blocks

    def place_blocks(self) -> None:
        remaining = self.spec.n_blocks
        if remaining >= 4 and self.rng.random() < 0.35 and self._try_quad():
            remaining -= 4
        for i in range(remaining):
            if not self._try_block():
                raise GenerationError(
                    f"could not place block {i} after {_PLACEMENT_ATTEMPTS} attempts; "
                    "reduce counts or symbol sizes"
                )

    def _block_sides(self) -> tuple[int, int]:
        lo = max(self.spec.min_symbol_size, BLOCK_MIN_SIDE)
        hi = max(lo, self.spec.max_symbol_size)
        return (
            int(self.rng.integers(lo, hi + 1)),
            int(self.rng.integers(lo, hi + 1)),
        )

    def _try_block(self) -> bool:
        for _ in range(_PLACEMENT_ATTEMPTS):
            w, h = self._block_sides()
            x0 = self._span(BORDER_MARGIN, self.spec.width - 1 - BORDER_MARGIN, w)
            y0 = self._span(BORDER_MARGIN, self.spec.height - 1 - BORDER_MARGIN, h)
            if x0 is None or y0 is None:
                continue
            box = (x0, y0, x0 + w, y0 + h)
            if self._clear_of_others(box):
                self._add_rect(_Rect(*box, "block"))
                return True
        return False

    def _try_quad(self) -> bool:
        lo = max(self.spec.min_symbol_size, BLOCK_MIN_SIDE)
        hi = max(lo, self.spec.max_symbol_size)
        for _ in range(_PLACEMENT_ATTEMPTS):
            w1, w2 = (int(self.rng.integers(lo, hi + 1)) for _ in range(2))
            h1, h2 = (int(self.rng.integers(lo, hi + 1)) for _ in range(2))
            x0 = self._span(BORDER_MARGIN, self.spec.width - 1 - BORDER_MARGIN, w1 + w2)
            y0 = self._span(BORDER_MARGIN, self.spec.height - 1 - BORDER_MARGIN, h1 + h2)
            if x0 is None or y0 is None:
                continue
            box = (x0, y0, x0 + w1 + w2, y0 + h1 + h2)
            if not self._clear_of_others(box):
                continue
            xm, ym = x0 + w1, y0 + h1
            for r in (
                _Rect(x0, y0, xm, ym, "block"),
                _Rect(xm, y0, box[2], ym, "block"),
                _Rect(x0, ym, xm, box[3], "block"),
                _Rect(xm, ym, box[2], box[3], "block"),
            ):
                self._add_rect(r)
            return True
        return False

    # -- walls

    def place_walls(self) -> None:
        for i in range(self.spec.n_walls):
            placed = False
            for _ in range(_PLACEMENT_ATTEMPTS):
                if self.rects and self.rng.random() < 0.5:
                    placed = self._try_attached_wall()
                else:
                    placed = self._try_free_wall()
                if placed:
                    break
            if not placed:
                raise GenerationError(
                    f"could not place wall {i} after {_PLACEMENT_ATTEMPTS} attempts; "
                    "reduce counts or symbol sizes"
                )

    def _wall_dims(self) -> tuple[int, int]:
        thickness = int(self.rng.integers(WALL_MIN_THICKNESS, WALL_MAX_THICKNESS + 1))
        lo = max(self.spec.min_symbol_size, WALL_MIN_LENGTH)
        hi = max(lo, self.spec.max_symbol_size)
        length = int(self.rng.integers(lo, hi + 1))
        return thickness, length

    def _try_free_wall(self) -> bool:
        thickness, length = self._wall_dims()
        w, h = (length, thickness) if self.rng.random() < 0.5 else (thickness, length)
        x0 = self._span(BORDER_MARGIN, self.spec.width - 1 - BORDER_MARGIN, w)
        y0 = self._span(BORDER_MARGIN, self.spec.height - 1 - BORDER_MARGIN, h)
        if x0 is None or y0 is None:
            return False
        box = (x0, y0, x0 + w, y0 + h)
        if not self._clear_of_others(box):
            return False
        self._add_rect(_Rect(*box, "wall"))
        return True

    def _try_attached_wall(self) -> bool:
        host_idx = int(self.rng.integers(0, len(self.rects)))
        host = self.rects[host_idx]
        side = ("left", "right", "top", "bottom")[int(self.rng.integers(0, 4))]
        thickness, depth = self._wall_dims()
        if side in ("left", "right"):
            lo = host.y0 + JUNCTION_CLEARANCE
            hi = host.y1 - JUNCTION_CLEARANCE
            t0 = self._span(lo, hi, thickness)
            if t0 is None:
                return False
            t1 = t0 + thickness
            if side == "right":
                box = (host.x1, t0, host.x1 + depth, t1)
            else:
                box = (host.x0 - depth, t0, host.x0, t1)
        else:
            lo = host.x0 + JUNCTION_CLEARANCE
            hi = host.x1 - JUNCTION_CLEARANCE
            t0 = self._span(lo, hi, thickness)
            if t0 is None:
                return False
            t1 = t0 + thickness
            if side == "bottom":
                box = (t0, host.y1, t1, host.y1 + depth)
            else:
                box = (t0, host.y0 - depth, t1, host.y0)
        if not self._fits_canvas(box):
            return False
        if not self._clear_of_others(box, skip={host_idx}):
            return False
        spans = self.attached.setdefault((host_idx, side), [])
        if any(t1 + JUNCTION_CLEARANCE > s0 and s1 + JUNCTION_CLEARANCE > t0 for s0, s1 in spans):
            return False
        spans.append((t0, t1))
        self._add_rect(_Rect(*box, "wall"))
        return True

    # -- scales

    def place_scales(self) -> None:
        for i in range(self.spec.n_scales):
            if not self._try_scale():
                raise GenerationError(
                    f"could not place scale {i} after {_PLACEMENT_ATTEMPTS} attempts; "
                    "reduce counts or symbol sizes"
                )

    def _try_scale(self) -> bool:
        lo = max(self.spec.min_symbol_size, SCALE_MIN_LENGTH)
        hi = max(lo, self.spec.max_symbol_size)
        for _ in range(_PLACEMENT_ATTEMPTS):
            length = int(self.rng.integers(lo, hi + 1))
            horizontal = bool(self.rng.random() < 0.5)
            if horizontal:
                x0 = self._span(BORDER_MARGIN, self.spec.width - 1 - BORDER_MARGIN, length)
                y = self._span(
                    BORDER_MARGIN + TICK_HALF,
                    self.spec.height - 1 - BORDER_MARGIN - TICK_HALF,
                    0,
                )
                if x0 is None or y is None:
                    continue
                box = (x0, y - TICK_HALF, x0 + length, y + TICK_HALF)
                ends = (x0, y, x0 + length, y)
            else:
                y0 = self._span(BORDER_MARGIN, self.spec.height - 1 - BORDER_MARGIN, length)
                x = self._span(
                    BORDER_MARGIN + TICK_HALF,
                    self.spec.width - 1 - BORDER_MARGIN - TICK_HALF,
                    0,
                )
                if y0 is None or x is None:
                    continue
                box = (x - TICK_HALF, y0, x + TICK_HALF, y0 + length)
                ends = (x, y0, x, y0 + length)
            if not self._clear_of_others(box):
                continue
            ticks = _tick_positions(ends[0 if horizontal else 1], length)
            self.scales.append(_Scale(*ends, ticks=tuple(ticks)))
            self.occupied.append(box)
            return True
        return False


def _tick_positions(start: int, length: int) -> list[int]:
    """Axis positions of intermediate ticks; empty for short scales."""
    if length < TICK_MIN_SCALE_LENGTH:
        return []
    out = []
    pos = start + TICK_SPACING
    while pos <= start + length - TICK_END_CLEARANCE:
        if pos - start >= TICK_END_CLEARANCE:
            out.append(pos)
        pos += TICK_SPACING
    return out


# ---------------------------------------------------------------- keypoints


def _rect_edges(r: _Rect) -> list[tuple[str, int, int, int]]:
    """Edges as (axis, fixed coordinate, span start, span end)."""
    return [
        ("h", r.y0, r.x0, r.x1),
        ("h", r.y1, r.x0, r.x1),
        ("v", r.x0, r.y0, r.y1),
        ("v", r.x1, r.y0, r.y1),
    ]


def _corner_points(rects: Sequence[_Rect]) -> dict[tuple[int, int], set]:
    arms: dict[tuple[int, int], set] = {}
    for r in rects:
        arms.setdefault((r.x0, r.y0), set()).update({RIGHT, DOWN})
        arms.setdefault((r.x1, r.y0), set()).update({LEFT, DOWN})
        arms.setdefault((r.x1, r.y1), set()).update({LEFT, UP})
        arms.setdefault((r.x0, r.y1), set()).update({RIGHT, UP})
    # second pass: a corner sitting on another rectangle's edge picks up
    # that edge's directions (strict interior: both; endpoint: inward)
    for r in rects:
        for axis, c, a0, a1 in _rect_edges(r):
            for (px, py), s in arms.items():
                if axis == "h" and py == c and a0 < px < a1:
                    s.update({LEFT, RIGHT})
                elif axis == "v" and px == c and a0 < py < a1:
                    s.update({UP, DOWN})
    return arms


def _scene_keypoints(
    rects: Sequence[_Rect], scales: Sequence[_Scale]
) -> tuple[list[Keypoint], dict[tuple[int, int], Keypoint]]:
    by_pos: dict[tuple[int, int], Keypoint] = {}
    for pos, arms in _corner_points(rects).items():
        key = frozenset(arms)
        if key not in CORNER_ARMS_TO_TYPE:
            raise GenerationError(f"unclassifiable junction at {pos}: arms {sorted(arms)}")
        by_pos[pos] = Keypoint(float(pos[0]), float(pos[1]), CORNER_ARMS_TO_TYPE[key])
    for s in scales:
        if s.horizontal:
            first, second = KeypointType.SCALE_LEFT, KeypointType.SCALE_RIGHT
            tick_type = KeypointType.SCALE_TICK_H
            tick_points = [(t, s.y0) for t in s.ticks]
        else:
            first, second = KeypointType.SCALE_TOP, KeypointType.SCALE_BOTTOM
            tick_type = KeypointType.SCALE_TICK_V
            tick_points = [(s.x0, t) for t in s.ticks]
        by_pos[(s.x0, s.y0)] = Keypoint(float(s.x0), float(s.y0), int(first))
        by_pos[(s.x1, s.y1)] = Keypoint(float(s.x1), float(s.y1), int(second))
        for pos in tick_points:
            by_pos[pos] = Keypoint(float(pos[0]), float(pos[1]), int(tick_type))
    points = [by_pos[pos] for pos in sorted(by_pos, key=lambda p: (p[1], p[0]))]
    return points, by_pos


def _rect_cycle(r: _Rect, by_pos: dict[tuple[int, int], Keypoint]) -> list[Keypoint]:
    """All keypoints on the rectangle boundary, clockwise from (x0, y0)."""
    on = [p for p in by_pos if _on_rect_boundary(p, r)]
    top = sorted([p for p in on if p[1] == r.y0], key=lambda p: p[0])
    right = sorted([p for p in on if p[0] == r.x1 and r.y0 < p[1] <= r.y1], key=lambda p: p[1])
    bottom = sorted(
        [p for p in on if p[1] == r.y1 and r.x0 <= p[0] < r.x1], key=lambda p: -p[0]
    )
    left = sorted([p for p in on if p[0] == r.x0 and r.y0 < p[1] < r.y1], key=lambda p: -p[1])
    return [by_pos[p] for p in top + right + bottom + left]


def _on_rect_boundary(p: tuple[int, int], r: _Rect) -> bool:
    x, y = p
    on_h = y in (r.y0, r.y1) and r.x0 <= x <= r.x1
    on_v = x in (r.x0, r.x1) and r.y0 <= y <= r.y1
    return on_h or on_v


# ---------------------------------------------------------------- rasterizer


def _stroke_bounds(c: int, width: int) -> tuple[int, int]:
    return c - (width - 1) // 2, c + width // 2


def _draw_hline(img: np.ndarray, y: int, x0: int, x1: int, width: int) -> None:
    r0, r1 = _stroke_bounds(y, width)
    img[max(r0, 0) : min(r1, img.shape[0] - 1) + 1, max(x0, 0) : min(x1, img.shape[1] - 1) + 1] = 0


def _draw_vline(img: np.ndarray, x: int, y0: int, y1: int, width: int) -> None:
    c0, c1 = _stroke_bounds(x, width)
    img[max(y0, 0) : min(y1, img.shape[0] - 1) + 1, max(c0, 0) : min(c1, img.shape[1] - 1) + 1] = 0


def _rasterize(
    spec: SceneSpec, rects: Sequence[_Rect], scales: Sequence[_Scale], rng: np.random.Generator
) -> np.ndarray:
    img = np.full((spec.height, spec.width), 255, dtype=np.uint8)
    lw = spec.line_width
    for r in rects:
        _draw_hline(img, r.y0, r.x0, r.x1, lw)
        _draw_hline(img, r.y1, r.x0, r.x1, lw)
        _draw_vline(img, r.x0, r.y0, r.y1, lw)
        _draw_vline(img, r.x1, r.y0, r.y1, lw)
    for s in scales:
        if s.horizontal:
            _draw_hline(img, s.y0, s.x0, s.x1, lw)
            for x in (s.x0, s.x1, *s.ticks):
                _draw_vline(img, x, s.y0 - TICK_HALF, s.y0 + TICK_HALF, lw)
        else:
            _draw_vline(img, s.x0, s.y0, s.y1, lw)
            for y in (s.y0, s.y1, *s.ticks):
                _draw_hline(img, y, s.x0 - TICK_HALF, s.x0 + TICK_HALF, lw)
    if spec.noise_level > 0.0:
        flip = rng.random(img.shape) < spec.noise_level
        img[flip] = 255 - img[flip]
    return img


# ---------------------------------------------------------------- scene API


def _place_scene(spec: SceneSpec, rng: np.random.Generator) -> _Placer:
    """Lay out all symbols, restarting from scratch when an earlier
    placement painted the later ones into a corner (a centered block
    can make any wall position illegal, so per-symbol retries are not
    enough)."""
    last: GenerationError | None = None
    for _ in range(_SCENE_RESTARTS):
        placer = _Placer(spec, rng)
        try:
            placer.place_blocks()
            placer.place_walls()
            placer.place_scales()
        except GenerationError as exc:
            last = exc
            continue
        return placer
    raise GenerationError(
        f"no layout found after {_SCENE_RESTARTS} scene restarts ({last}); "
        "reduce counts or symbol sizes"
    )


def generate_scene(spec: SceneSpec) -> AnnotatedImage:
    """Generate one scene. Deterministic: equal specs give equal bytes."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.rng_seed))
    placer = _place_scene(spec, rng)

    points, by_pos = _scene_keypoints(placer.rects, placer.scales)

    symbols: list[RectangleSymbol] = []
    for r in placer.rects:
        symbols.append(RectangleSymbol(r.kind, tuple(_rect_cycle(r, by_pos))))
    for s in placer.scales:
        symbols.append(
            RectangleSymbol(
                "scale",
                (by_pos[(s.x0, s.y0)], by_pos[(s.x1, s.y1)]),
            )
        )

    boxes: list[RegionBox] = []
    for sym in symbols:
        x0, y0, x1, y1 = sym.bbox
        boxes.append(
            RegionBox(
                max(x0 - REGION_BOX_PAD, 0.0),
                max(y0 - REGION_BOX_PAD, 0.0),
                min(x1 + REGION_BOX_PAD, spec.width - 1.0),
                min(y1 + REGION_BOX_PAD, spec.height - 1.0),
                sym.symbol_class,
            )
        )

    img = _rasterize(spec, placer.rects, placer.scales, rng)
    return AnnotatedImage(img, points, boxes, symbols)


# ---------------------------------------------------------------- annotations


def save_annotations(ann: AnnotatedImage, path: str | Path, image_name: str) -> None:
    """Write the annotation JSON next to its raster. Symbols reference
    keypoints by index into the 'keypoints' array."""
    index = {(p.x, p.y, p.type_id): i for i, p in enumerate(ann.keypoints)}
    doc = {
        "image": image_name,
        "width": ann.width,
        "height": ann.height,
        "keypoints": [
            {"x": p.x, "y": p.y, "type_id": int(p.type_id)} for p in ann.keypoints
        ],
        "regions": [
            {"x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1, "class": b.region_class}
            for b in ann.region_boxes
        ],
        "symbols": [
            {
                "class": s.symbol_class,
                "keypoint_indices": [index[(p.x, p.y, p.type_id)] for p in s.keypoints],
            }
            for s in ann.symbols_gt
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _require(doc: dict, key: str, ctx: str) -> object:
    if key not in doc:
        raise AnnotationError(f"{ctx}: missing field '{key}'")
    return doc[key]


def load_annotations(path: str | Path, with_raster: bool = True) -> AnnotatedImage:
    """Read an annotation JSON back into an AnnotatedImage. Set
    with_raster=False to skip loading the referenced image file (the
    raster is then blank)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AnnotationError(f"{path.name}: not valid JSON ({e})") from None
    ctx = path.name
    width = _require(doc, "width", ctx)
    height = _require(doc, "height", ctx)
    if not isinstance(width, int) or not isinstance(height, int) or width < 1 or height < 1:
        raise AnnotationError(f"{ctx}: width/height must be positive integers")
    image_name = _require(doc, "image", ctx)

    points: list[Keypoint] = []
    for i, kp in enumerate(_require(doc, "keypoints", ctx)):
        for fld in ("x", "y", "type_id"):
            if fld not in kp:
                raise AnnotationError(f"{ctx}: keypoints[{i}] missing field '{fld}'")
        t = kp["type_id"]
        if not isinstance(t, int) or not 1 <= t <= N_TYPES:
            raise AnnotationError(
                f"{ctx}: keypoints[{i}].type_id must be an integer in 1..{N_TYPES}, got {t!r}"
            )
        x, y = float(kp["x"]), float(kp["y"])
        if not (math.isfinite(x) and math.isfinite(y)):
            raise AnnotationError(f"{ctx}: keypoints[{i}] has non-finite coordinates")
        points.append(Keypoint(x, y, t))

    boxes: list[RegionBox] = []
    for i, rb in enumerate(doc.get("regions", [])):
        for fld in ("x0", "y0", "x1", "y1", "class"):
            if fld not in rb:
                raise AnnotationError(f"{ctx}: regions[{i}] missing field '{fld}'")
        try:
            boxes.append(
                RegionBox(
                    float(rb["x0"]), float(rb["y0"]), float(rb["x1"]), float(rb["y1"]),
                    str(rb["class"]),
                )
            )
        except ValueError as e:
            raise AnnotationError(f"{ctx}: regions[{i}]: {e}") from None

    symbols: list[RectangleSymbol] = []
    for i, sym in enumerate(doc.get("symbols", [])):
        for fld in ("class", "keypoint_indices"):
            if fld not in sym:
                raise AnnotationError(f"{ctx}: symbols[{i}] missing field '{fld}'")
        members = []
        for j, idx in enumerate(sym["keypoint_indices"]):
            if not isinstance(idx, int) or not 0 <= idx < len(points):
                raise AnnotationError(
                    f"{ctx}: symbols[{i}].keypoint_indices[{j}] out of range: {idx!r}"
                )
            members.append(points[idx])
        try:
            symbols.append(RectangleSymbol(str(sym["class"]), tuple(members)))
        except ValueError as e:
            raise AnnotationError(f"{ctx}: symbols[{i}]: {e}") from None

    if with_raster:
        img_path = path.parent / str(image_name)
        if img_path.exists():
            img = raster.load_png(img_path)
            if img.shape != (height, width):
                raise AnnotationError(
                    f"{ctx}: raster {img.shape} disagrees with declared "
                    f"{height}x{width}"
                )
        else:
            img = np.full((height, width), 255, dtype=np.uint8)
    else:
        img = np.full((height, width), 255, dtype=np.uint8)
    return AnnotatedImage(img, points, boxes, symbols)
