"""Shared value types: keypoints, region boxes, grouped symbols.

Coordinates are continuous image coordinates with x growing rightward
and y growing downward. A raster pixel (row, col) covers the point
(col, row) exactly; ground truth emitted by the generator therefore
sits on integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field


SYMBOL_CLASSES = ("scale", "block", "wall")

# Shared geometric rule separating the two rectangle classes: walls are
# thin (8..12 px across), blocks have every side >= 16 px. The
# generator never produces rectangles in the ambiguous band between.
WALL_MAX_THICKNESS = 12.0
BLOCK_MIN_SIDE = 16.0


def classify_rectangle(width: float, height: float) -> str:
    return "wall" if min(width, height) <= WALL_MAX_THICKNESS else "block"


@dataclass(frozen=True)
class Keypoint:
    """A typed point. type_id is one of the 15 ids in cadspot.taxonomy."""

    x: float
    y: float
    type_id: int
    score: float = 1.0

    def distance_to(self, other: "Keypoint") -> float:
        return ((self.x - other.x) ** 2 + (self.y - other.y) ** 2) ** 0.5


@dataclass(frozen=True)
class RegionBox:
    """Axis-aligned box [x0, x1] x [y0, y1] with a region class label."""

    x0: float
    y0: float
    x1: float
    y1: float
    region_class: str = "region"

    def __post_init__(self) -> None:
        if self.x1 < self.x0 or self.y1 < self.y0:
            raise ValueError(f"degenerate region box: {self}")

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass(frozen=True)
class RectangleSymbol:
    """A grouped symbol: 2 ordered endpoints for a scale, a closed
    clockwise cycle of >= 4 points for a block or wall. Cycle points
    include collinear junctions lying on the rectangle boundary."""

    symbol_class: str
    keypoints: tuple[Keypoint, ...]

    def __post_init__(self) -> None:
        if self.symbol_class not in SYMBOL_CLASSES:
            raise ValueError(f"unknown symbol class: {self.symbol_class!r}")
        n = len(self.keypoints)
        if self.symbol_class == "scale":
            if n != 2:
                raise ValueError(f"scale symbol needs exactly 2 keypoints, got {n}")
        elif n < 4:
            raise ValueError(f"{self.symbol_class} symbol needs >= 4 keypoints, got {n}")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p.x for p in self.keypoints]
        ys = [p.y for p in self.keypoints]
        return (min(xs), min(ys), max(xs), max(ys))


@dataclass
class Detection:
    """One decoded keypoint in image coordinates."""

    type_id: int
    x: float
    y: float
    score: float
    patch_index: int = 0

    def as_keypoint(self) -> Keypoint:
        return Keypoint(self.x, self.y, self.type_id, self.score)
