"""Whole-image inference: tiling, per-patch prediction, peak picking,
stitching and cross-border deduplication.

Patches are laid out on a regular grid; remainders at the right and
bottom edges are padded with background (255) so every patch has the
exact network input size. Detections decoded inside a patch are
translated by the patch origin, detections landing in the padding are
dropped, and duplicates that overlapping patches produce for the same
class are merged keeping the higher score.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .codec import (
    UNIT_PEAK,
    Heatmap,
    OffsetMap,
    _strict_local_maxima,
    decode_argmax,
    encode_target,
)
from .model import Predictor, forward
from .primitives import Detection, Keypoint

DEFAULT_THRESHOLD = 0.6
DEFAULT_DEDUP_RADIUS = 2.0


@dataclass(frozen=True)
class PatchGrid:
    """Tiling layout. stride == patch_size gives non-overlapping tiles;
    smaller strides overlap (duplicates are handled downstream)."""

    patch_size: int = 256
    stride: int | None = None

    def __post_init__(self) -> None:
        if self.patch_size < 1:
            raise ValueError("patch_size must be positive")
        if self.stride is None:
            object.__setattr__(self, "stride", self.patch_size)
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def origins(self, width: int, height: int) -> list[tuple[int, int]]:
        """Per-patch global origins, row-major; padded coverage always
        contains the full image."""

        def axis(extent: int) -> list[int]:
            if extent <= self.patch_size:
                return [0]
            n = -(-(extent - self.patch_size) // self.stride) + 1
            return [i * self.stride for i in range(n)]

        return [(ox, oy) for oy in axis(height) for ox in axis(width)]


def tile(image: np.ndarray, grid: PatchGrid) -> list[tuple[np.ndarray, tuple[int, int]]]:
    """Cut the image into patch_size squares with background padding at
    the right/bottom remainders."""
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    h, w = arr.shape
    ps = grid.patch_size
    out = []
    for ox, oy in grid.origins(w, h):
        patch = np.full((ps, ps), 255, dtype=arr.dtype)
        ylo, xlo = oy, ox
        yhi, xhi = min(oy + ps, h), min(ox + ps, w)
        patch[: yhi - ylo, : xhi - xlo] = arr[ylo:yhi, xlo:xhi]
        out.append((patch, (ox, oy)))
    return out


def nms(channel: np.ndarray, radius: int = 1) -> list[tuple[int, int]]:
    """Cells that are the strict maximum of their (2r+1)^2 window; a
    plateau keeps only its smallest row-major cell."""
    return _strict_local_maxima(np.asarray(channel, dtype=np.float64), radius)


class PatchPredictor(Protocol):
    """What detect_image needs from a predictor: the expected input
    size and a per-patch forward pass returning decodable maps (the
    offset map may be None for offset-free decoding)."""

    patch_size: int

    def predict_patch(
        self, patch: np.ndarray, origin: tuple[int, int]
    ) -> tuple[Heatmap, OffsetMap | None]: ...


class ModelPredictor:
    """Adapter running a trained network on each patch."""

    def __init__(self, predictor: Predictor):
        self.net = predictor
        self.patch_size = predictor.config.patch_size

    def predict_patch(
        self, patch: np.ndarray, origin: tuple[int, int]
    ) -> tuple[Heatmap, OffsetMap | None]:
        heat, off = forward(self.net, patch)
        c = self.net.config.channels
        hm = Heatmap(
            np.asarray(heat, dtype=np.float64),
            self.net.config.down_sample,
            UNIT_PEAK,
        )
        if not self.net.config.predict_offsets:
            return hm, None
        mask = np.ones((c,) + heat.shape[1:], dtype=np.float64)
        return hm, OffsetMap(np.asarray(off, dtype=np.float64), mask)


class OraclePredictor:
    """Predictor that renders the ground truth as its own output; used
    to test the tiling/stitching path in isolation."""

    def __init__(
        self,
        keypoints: Sequence[Keypoint],
        patch_size: int = 256,
        down_sample: int = 4,
        sigma: float = 1.0,
        channels: int = 15,
    ):
        if patch_size % down_sample != 0:
            raise ValueError("patch_size must be divisible by down_sample")
        self.keypoints = list(keypoints)
        self.patch_size = patch_size
        self.down_sample = down_sample
        self.sigma = sigma
        self.channels = channels

    def predict_patch(
        self, patch: np.ndarray, origin: tuple[int, int]
    ) -> tuple[Heatmap, OffsetMap | None]:
        ox, oy = origin
        local = [
            Keypoint(k.x - ox, k.y - oy, k.type_id, k.score)
            for k in self.keypoints
            if 0 <= k.x - ox < self.patch_size and 0 <= k.y - oy < self.patch_size
        ]
        cells = self.patch_size // self.down_sample
        target = encode_target(
            local, self.sigma, (self.channels, cells, cells), self.down_sample
        )
        return target.heatmap, target.offsets


def dedup_detections(
    detections: Sequence[Detection], radius: float = DEFAULT_DEDUP_RADIUS
) -> list[Detection]:
    """Greedy same-class suppression: visit by descending score (ties
    by class, position, patch) and keep a detection only when no kept
    detection of the same class lies within `radius`. Idempotent, since
    the kept set has pairwise same-class distances above the radius."""
    order = sorted(
        detections, key=lambda d: (-d.score, d.type_id, d.y, d.x, d.patch_index)
    )
    kept: list[Detection] = []
    r2 = radius * radius
    for d in order:
        clash = any(
            k.type_id == d.type_id and (k.x - d.x) ** 2 + (k.y - d.y) ** 2 <= r2
            for k in kept
        )
        if not clash:
            kept.append(d)
    kept.sort(key=lambda d: (d.y, d.x, d.type_id))
    return kept


def detect_image(
    predictor: PatchPredictor,
    image: np.ndarray,
    grid: PatchGrid | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    nms_radius: int = 1,
    dedup_radius: float = DEFAULT_DEDUP_RADIUS,
) -> list[Detection]:
    """Tile, predict, decode and stitch. Every returned detection lies
    within the image bounds (padding responses are discarded)."""
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("image must be a non-empty 2-D array")
    if grid is None:
        grid = PatchGrid(patch_size=predictor.patch_size)
    if grid.patch_size != predictor.patch_size:
        raise ValueError(
            f"grid patch_size {grid.patch_size} does not match predictor patch_size "
            f"{predictor.patch_size}"
        )
    h, w = arr.shape
    raw: list[Detection] = []
    for patch_index, (patch, origin) in enumerate(tile(arr, grid)):
        heatmap, offsets = predictor.predict_patch(patch, origin)
        for kp in decode_argmax(heatmap, offsets, threshold=threshold, nms_radius=nms_radius):
            x = kp.x + origin[0]
            y = kp.y + origin[1]
            if x >= w or y >= h:
                continue  # padding region beyond the true image
            raw.append(Detection(kp.type_id, x, y, kp.score, patch_index))
    return dedup_detections(raw, dedup_radius)


# ----------------------------------------------------------------- CSV


def write_detections_csv(
    detections_by_image: dict[str, Sequence[Detection]], path: str | Path
) -> None:
    """Rows `image,type_id,x,y,score` with 6-decimal coordinates."""
    with open(path, "w", newline="") as f:
        f.write("image,type_id,x,y,score\n")
        for image in sorted(detections_by_image):
            for d in detections_by_image[image]:
                f.write(f"{image},{d.type_id},{d.x:.6f},{d.y:.6f},{d.score:.6f}\n")


def read_detections_csv(path: str | Path) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    with open(path, newline="") as f:
        header = f.readline().strip()
        if header != "image,type_id,x,y,score":
            raise ValueError(f"unexpected detections header: {header!r}")
        for ln, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"line {ln}: expected 5 fields, got {len(parts)}")
            image, type_id, x, y, score = parts
            out.setdefault(image, []).append(
                Detection(int(type_id), float(x), float(y), float(score))
            )
    return out
