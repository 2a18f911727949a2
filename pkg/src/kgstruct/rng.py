"""Named, counter-based random streams.

Every consumer asks for a stream by ``(seed, label)``; the label is hashed
into the Philox key, so streams for different purposes never overlap and do
not depend on call order.
"""

import hashlib

import numpy as np


def make_rng(seed: int, label: str = "") -> np.random.Generator:
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
