"""Counter-based random streams and deterministic replica splitting.

Every stream is a Philox generator keyed by ``(seed, *key)`` through
``numpy.random.SeedSequence``'s spawn key, so two different keys never share
a counter range and results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import zlib
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 10_000


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("stream key components must be non-negative")
    return part


def substream(seed: int, *key) -> np.random.Generator:
    """Return the generator for substream ``key`` of master ``seed``.

    Key components may be non-negative integers or strings (strings are
    hashed with CRC-32).
    """
    if seed is None:
        raise ValueError("an explicit seed is required for every random stream")
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def fresh_seed() -> int:
    """Draw a 64-bit seed from OS entropy (recorded by callers for replay)."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])


def chunk_sizes(total: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    total = int(total)
    if total < 0:
        raise ValueError("replica count must be non-negative")
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def replicate(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    replicas: int,
    seed: int,
    key: Sequence = (),
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Run ``fn(rng, n)`` over fixed-size replica blocks and stack the results.

    Block ``i`` always receives ``substream(seed, *key, i)`` and the outputs
    are concatenated in block order, so the result is identical for any
    ``threads`` value.
    """
    sizes = chunk_sizes(replicas, chunk)
    key = tuple(key)

    def run(i: int) -> np.ndarray:
        return np.asarray(fn(substream(seed, *key, i), sizes[i]))

    if threads <= 1 or len(sizes) <= 1:
        parts = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts, axis=0)
