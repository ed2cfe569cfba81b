"""Named, counter-based random streams.

``stream(seed, "dropout", epoch)`` always yields the same Philox generator for
the same arguments, and streams with different keys are statistically
independent.  Drawing from one stream never shifts another, which is what
keeps e.g. the head initialization identical whether or not a model was
pre-trained first.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
