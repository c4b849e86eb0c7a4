"""8-bit grayscale raster IO: PNG (via Pillow) and binary PGM (P5)."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image


def save_png(image: np.ndarray, path: str | Path) -> None:
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError(f"expected 2-D uint8 image, got {image.dtype} {image.shape}")
    Image.fromarray(image, mode="L").save(Path(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(Path(path)) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_pgm(image: np.ndarray, path: str | Path) -> None:
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError(f"expected 2-D uint8 image, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def load_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    pixels = data[m.end():]
    if len(pixels) < w * h:
        raise ValueError(f"{path}: truncated PGM payload")
    return np.frombuffer(pixels[: w * h], dtype=np.uint8).reshape(h, w).copy()
