"""Seed derivation and an order-preserving parallel map.

Every random stream in the package is derived from one user seed through
:func:`mix`, so results never depend on how work is scheduled across threads.

``mix(seed, k1, k2, ...)`` is splitmix64 chained over the keys::

    h = splitmix64(seed mod 2**64)
    for k in keys:
        h = splitmix64(h XOR splitmix64(k mod 2**64))

This definition is part of the public contract and will not change.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

T = TypeVar("T")
R = TypeVar("R")


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix(seed: int, *keys: int) -> int:
    """Derive a 64-bit seed from ``seed`` and a path of integer keys."""
    h = splitmix64(int(seed) & _MASK)
    for k in keys:
        h = splitmix64(h ^ splitmix64(int(k) & _MASK))
    return h


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix(seed, *keys)))


def default_threads() -> int:
    """Thread count from ``EPX_THREADS``, else 1."""
    value = os.environ.get("EPX_THREADS", "").strip()
    if not value:
        return 1
    n = int(value)
    if n < 1:
        raise ValueError(f"EPX_THREADS must be >= 1, got {n}")
    return n


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Map ``fn`` over ``items`` keeping input order.

    Work items must be independent; output order never depends on scheduling.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def chunks(n: int, parts: int) -> Sequence[range]:
    """Split ``range(n)`` into at most ``parts`` contiguous ranges."""
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i] < bounds[i + 1]]
