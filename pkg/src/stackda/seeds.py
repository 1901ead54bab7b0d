"""Named random sub-streams derived from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, name: str) -> int:
    ss = np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(name.encode("utf-8")),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def substream(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, name))
