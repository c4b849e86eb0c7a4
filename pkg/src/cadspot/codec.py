"""Heatmap codec: Gaussian keypoint encoding and sub-pixel decoding.

A keypoint at continuous image coordinate mu is represented on an
R-fold downsampled grid by (a) a Gaussian bump centered at the
quantized cell floor(mu / R) on its class channel and (b) a stored
offset that recovers the sub-cell position. Raw offsets mu/R -
floor(mu/R) live in [0, 1); they are stored re-centered to
[-1/2, 1/2) by subtracting 1/2, so an untrained (all-zero) offset
head decodes to cell centers and its per-axis error is bounded by
R/2. Decoding inverts exactly:

    coordinate = R * (cell + stored_offset + 1/2)

Heatmap amplitude has two modes. "unit_peak" drops the normalization
factor so every peak is 1.0 and a fixed detection threshold applies
regardless of sigma. "normalized_pdf" keeps the 1/(sqrt(2*pi)*sigma)
factor; it exists so the analytic spatial gradient can be checked
against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .primitives import Keypoint
from .taxonomy import N_TYPES

UNIT_PEAK = "unit_peak"
NORMALIZED_PDF = "normalized_pdf"
AMPLITUDE_MODES = (UNIT_PEAK, NORMALIZED_PDF)


@dataclass
class Heatmap:
    """Per-class response maps, shape (C, h, w)."""

    values: np.ndarray
    down_sample: int
    amplitude: str = UNIT_PEAK

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ValueError(f"heatmap must be (C, h, w), got shape {self.values.shape}")
        if self.down_sample < 1:
            raise ValueError("down_sample must be >= 1")
        if self.amplitude not in AMPLITUDE_MODES:
            raise ValueError(f"unknown amplitude mode: {self.amplitude!r}")

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]


@dataclass
class OffsetMap:
    """Stored offsets, shape (2C, h, w); channels (2c, 2c+1) hold the
    x and y offsets for class channel c. mask (C, h, w) marks the
    cells that carry supervision (the quantized ground-truth cells)."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 3 or self.values.shape[0] % 2:
            raise ValueError(f"offset map must be (2C, h, w), got {self.values.shape}")
        if self.mask.shape != (self.values.shape[0] // 2,) + self.values.shape[1:]:
            raise ValueError(
                f"offset mask shape {self.mask.shape} does not match values "
                f"{self.values.shape}"
            )


@dataclass
class EncodedTarget:
    heatmap: Heatmap
    offsets: OffsetMap
    sigma: float


def quantize(x: float, y: float, down_sample: int) -> tuple[tuple[int, int], tuple[float, float]]:
    """Split a continuous coordinate into (cell, stored_offset).

    cell = (floor(x/R), floor(y/R)); stored offsets are the fractional
    parts re-centered by -1/2, each in [-1/2, 1/2).
    """
    if down_sample < 1:
        raise ValueError("down_sample must be >= 1")
    cx = math.floor(x / down_sample)
    cy = math.floor(y / down_sample)
    ox = x / down_sample - cx - 0.5
    oy = y / down_sample - cy - 0.5
    return (cx, cy), (ox, oy)


def dequantize(cell: tuple[int, int], offset: tuple[float, float], down_sample: int) -> tuple[float, float]:
    """Inverse of quantize: R * (cell + stored_offset + 1/2)."""
    return (
        down_sample * (cell[0] + offset[0] + 0.5),
        down_sample * (cell[1] + offset[1] + 0.5),
    )


def peak_value(sigma: float, amplitude: str = UNIT_PEAK) -> float:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if amplitude == UNIT_PEAK:
        return 1.0
    if amplitude == NORMALIZED_PDF:
        return 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    raise ValueError(f"unknown amplitude mode: {amplitude!r}")


def _grid(h: int, w: int, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    ys = np.arange(h, dtype=dtype)[:, None]
    xs = np.arange(w, dtype=dtype)[None, :]
    return xs, ys


def encode_heatmap(
    keypoints: Sequence[Keypoint],
    sigma: float,
    shape: tuple[int, int, int],
    down_sample: int,
    amplitude: str = UNIT_PEAK,
    dtype=np.float64,
) -> Heatmap:
    """Render Gaussian bumps centered at each keypoint's quantized cell.

    Multiple keypoints on one channel combine by elementwise maximum.
    A keypoint whose quantized cell falls outside the grid is a caller
    error; callers tiling a large image must filter points per patch.
    """
    c, h, w = shape
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    values = np.zeros((c, h, w), dtype=dtype)
    amp = peak_value(sigma, amplitude)
    xs, ys = _grid(h, w, dtype)
    inv = 1.0 / (2.0 * sigma * sigma)
    for p in keypoints:
        ch = int(p.type_id) - 1
        if not 0 <= ch < c:
            raise ValueError(f"type_id {p.type_id} outside 1..{c}")
        (cx, cy), _ = quantize(p.x, p.y, down_sample)
        if not (0 <= cx < w and 0 <= cy < h):
            raise ValueError(
                f"keypoint ({p.x}, {p.y}) quantizes to cell ({cx}, {cy}) "
                f"outside the {h}x{w} grid"
            )
        bump = amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) * inv)
        np.maximum(values[ch], bump, out=values[ch])
    return Heatmap(values, down_sample, amplitude)


def encode_offsets(
    keypoints: Sequence[Keypoint],
    shape: tuple[int, int, int],
    down_sample: int,
    dtype=np.float64,
) -> OffsetMap:
    """Write each keypoint's stored offset at its quantized cell and
    mark that cell in the supervision mask. If two same-class points
    share a cell the later write wins; the generator keeps same-class
    points far enough apart for this not to occur."""
    c, h, w = shape
    values = np.zeros((2 * c, h, w), dtype=dtype)
    mask = np.zeros((c, h, w), dtype=bool)
    for p in keypoints:
        ch = int(p.type_id) - 1
        if not 0 <= ch < c:
            raise ValueError(f"type_id {p.type_id} outside 1..{c}")
        (cx, cy), (ox, oy) = quantize(p.x, p.y, down_sample)
        if not (0 <= cx < w and 0 <= cy < h):
            raise ValueError(
                f"keypoint ({p.x}, {p.y}) quantizes to cell ({cx}, {cy}) "
                f"outside the {h}x{w} grid"
            )
        values[2 * ch, cy, cx] = ox
        values[2 * ch + 1, cy, cx] = oy
        mask[ch, cy, cx] = True
    return OffsetMap(values, mask)


def encode_target(
    keypoints: Sequence[Keypoint],
    sigma: float,
    shape: tuple[int, int, int],
    down_sample: int,
    amplitude: str = UNIT_PEAK,
    dtype=np.float64,
) -> EncodedTarget:
    return EncodedTarget(
        heatmap=encode_heatmap(keypoints, sigma, shape, down_sample, amplitude, dtype),
        offsets=encode_offsets(keypoints, shape, down_sample, dtype),
        sigma=sigma,
    )


def heatmap_gradient(
    mu: tuple[float, float], sigma: float, x: float, y: float
) -> tuple[float, float]:
    """Analytic spatial gradient of the normalized-pdf Gaussian bump.

    d/dx [exp(-((x-mx)^2+(y-my)^2)/(2 s^2)) / (sqrt(2 pi) s)]
        = -(x-mx) / (sqrt(2 pi) s^3) * exp(...)

    and symmetrically for y. The sign is the calculus derivative: the
    response decreases when moving away from the center.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    mx, my = mu
    e = math.exp(-((x - mx) ** 2 + (y - my) ** 2) / (2.0 * sigma * sigma))
    k = math.sqrt(2.0 * math.pi) * sigma**3
    return (-(x - mx) / k * e, -(y - my) / k * e)


def _strict_local_maxima(channel: np.ndarray, radius: int = 1) -> list[tuple[int, int]]:
    """Cells that are the maximum of their (2r+1)^2 neighborhood, with
    ties broken by smallest row-major index (a plateau yields exactly
    one survivor). Returned sorted row-major."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    h, w = channel.shape
    pad = np.pad(channel, radius, mode="constant", constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(pad, (2 * radius + 1, 2 * radius + 1))
    wmax = win.max(axis=(2, 3))
    out: list[tuple[int, int]] = []
    for r, c in zip(*np.nonzero(channel == wmax)):
        v = channel[r, c]
        first = True
        for rr in range(max(0, r - radius), min(h, r + radius + 1)):
            for cc in range(max(0, c - radius), min(w, c + radius + 1)):
                if channel[rr, cc] == v and (rr, cc) != (r, c) and (rr * w + cc) < (r * w + c):
                    first = False
                    break
            if not first:
                break
        if first:
            out.append((int(r), int(c)))
    return out


def decode_argmax(
    heatmap: Heatmap,
    offsets: OffsetMap | None,
    threshold: float = 0.6,
    nms_radius: int = 1,
) -> list[Keypoint]:
    """Peak decoding: every strict local maximum above threshold yields
    a keypoint at R * (cell + stored_offset + 1/2). With offsets=None
    the stored offset is taken as zero, i.e. cell centers."""
    r_factor = heatmap.down_sample
    c, h, w = heatmap.values.shape
    if offsets is not None and offsets.values.shape != (2 * c, h, w):
        raise ValueError(
            f"offset shape {offsets.values.shape} does not match heatmap "
            f"{heatmap.values.shape}"
        )
    found: list[Keypoint] = []
    for ch in range(c):
        for row, col in _strict_local_maxima(heatmap.values[ch], nms_radius):
            score = float(heatmap.values[ch, row, col])
            if score <= threshold:
                continue
            if offsets is None:
                ox = oy = 0.0
            else:
                ox = float(offsets.values[2 * ch, row, col])
                oy = float(offsets.values[2 * ch + 1, row, col])
            x, y = dequantize((col, row), (ox, oy), r_factor)
            found.append(Keypoint(x, y, ch + 1, score))
    return found


def decode_soft_argmax(heatmap: Heatmap, channel: int) -> tuple[float, float]:
    """Baseline decoder: expectation of the grid coordinates under the
    sum-normalized channel, scaled by R. No offset compensation."""
    vals = heatmap.values[channel]
    total = float(vals.sum())
    if total <= 0.0:
        raise ValueError(
            f"channel {channel} does not normalize to a distribution (sum={total})"
        )
    h, w = vals.shape
    xs, ys = _grid(h, w, vals.dtype)
    px = float((vals * xs).sum() / total)
    py = float((vals * ys).sum() / total)
    return (heatmap.down_sample * px, heatmap.down_sample * py)


def mvd_drift_probability(
    sigma: float,
    noise_std: float,
    trials: int = 10000,
    rng_seed: int = 0,
    map_size: int = 33,
    amplitude: str = UNIT_PEAK,
    chunk: int = 256,
) -> float:
    """Max-Value Drift probe: Monte-Carlo estimate of the probability
    that i.i.d. Gaussian pixel noise moves the argmax of a single-bump
    heatmap off its center cell by at least one cell.

    Wide kernels ride closer to their peak next to the center, so the
    same noise dislodges the argmax more easily.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    center = map_size // 2
    clean = encode_heatmap(
        [Keypoint(float(center), float(center), 1)],
        sigma,
        (1, map_size, map_size),
        down_sample=1,
        amplitude=amplitude,
    ).values[0]
    center_flat = center * map_size + center
    rng = np.random.default_rng(rng_seed)
    drifted = 0
    done = 0
    flat = clean.ravel()
    while done < trials:
        n = min(chunk, trials - done)
        noisy = flat[None, :] + rng.normal(0.0, noise_std, size=(n, flat.size))
        drifted += int(np.count_nonzero(np.argmax(noisy, axis=1) != center_flat))
        done += n
    return drifted / trials
