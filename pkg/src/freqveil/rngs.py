"""Deterministic, independently addressable random streams.

Every stochastic choice in the package draws from a stream keyed by a base
seed plus a tuple of string/int tags, so independent components (per-clip
noise, per-epoch shuffles, frame picks) never share state and any single
stream can be reproduced in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag: object) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def stream(seed: int, *tags: object) -> np.random.Generator:
    """Return a generator for the stream addressed by (seed, *tags)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
