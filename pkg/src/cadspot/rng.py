"""Named random substreams.

All randomness flows from one root seed. Each consumer asks for a
stream by name; the name is hashed into the seed material, so streams
are independent and any component can be re-run on its own without
replaying the draws of the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def seed_stream(root_seed: int, name: str) -> np.random.Generator:
    """Generator for the substream `name` under `root_seed`."""
    if root_seed < 0:
        raise ValueError("root_seed must be non-negative")
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence((root_seed, tag)))
