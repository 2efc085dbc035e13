"""Named random streams: one user seed, independent reproducible substreams."""
import zlib

import numpy as np


def named_stream(seed: int, label: str) -> np.random.Generator:
    """Generator keyed on ``(seed, crc32(label))``; stable across processes."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode())])
