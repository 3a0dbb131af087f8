"""Seeded random streams.

All randomness goes through Philox (a counter-based generator) keyed by a
``SeedSequence``. Streams are split either positionally (``spawn``) or by a
content key, so that a child computation gets the same stream no matter in
which order it is reached.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def spawn(seed: int, n: int) -> list[np.random.Generator]:
    return [make_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


def keyed_rng(seed: int, *parts: Iterable[int] | int | str) -> np.random.Generator:
    """Stream derived from ``seed`` and a content key (platform independent)."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            h.update(part.encode())
        elif isinstance(part, (int, np.integer)):
            h.update(int(part).to_bytes(8, "little", signed=True))
        else:
            h.update(np.asarray(list(part), dtype="<i8").tobytes())
        h.update(b"|")
    words = np.frombuffer(h.digest(), dtype="<u4")
    return make_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *map(int, words)]))


def floyd_subset(rng: np.random.Generator, n: int, r: int) -> tuple[int, ...]:
    """Uniform r-subset of range(n), sorted, via Floyd's algorithm."""
    chosen: set[int] = set()
    for j in range(n - r, n):
        t = int(rng.integers(0, j + 1))
        chosen.add(j if t in chosen else t)
    return tuple(sorted(chosen))
