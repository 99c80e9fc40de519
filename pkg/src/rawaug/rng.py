"""Seed derivation.

Every random draw comes from a Philox (counter-based) generator whose key is
derived from ``(root seed, *stream key)``.  A frame's noise therefore depends
only on the root seed and the frame's position in its pipeline, never on
which worker computed it or in what order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# stream tags, kept distinct so two purposes never share a key
SPEC = 1
NOISE = 2
CAPTURE = 3
RANSAC = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return stream(0)
    return stream(int(rng))


def parallel_map(fn: Callable[[T], R], items: Sequence[T] | Iterable[T],
                 threads: int = 1) -> list[R]:
    """Ordered map; ``threads <= 1`` runs inline."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
