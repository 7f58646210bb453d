"""Reproducible random streams.

Every sampler draws from a counter-based Philox generator keyed by
``(seed, stream, block)``. Monte Carlo work is cut into fixed blocks of
replicas, each with its own generator, so results do not depend on how
the blocks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if int(self.stream) < 0:
            raise DomainError("stream id must be non-negative")

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), int(block)))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def normals(self, n: int, block: int = 0) -> np.ndarray:
        return self.generator(block).standard_normal(n)


def as_stream(rng) -> RngStream:
    """Accept an :class:`RngStream`, an integer seed or ``None`` (seed 0)."""
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise DomainError(f"cannot build a random stream from {type(rng).__name__}")


def block_sizes(replicas: int, block: int = DEFAULT_BLOCK) -> list[int]:
    if replicas <= 0:
        raise DomainError("replicas must be positive")
    full, rest = divmod(int(replicas), block)
    return [block] * full + ([rest] if rest else [])


def run_blocks(rng, replicas: int, fn: Callable[[np.random.Generator, int], object],
               workers: int = 1, block: int = DEFAULT_BLOCK) -> list:
    """Call ``fn(generator, n)`` once per block and return the results in block order.

    ``fn`` should release the GIL (numba ``nogil``) for ``workers > 1`` to help.
    """
    stream = as_stream(rng)
    sizes = block_sizes(replicas, block)
    jobs = [(stream.generator(i), n) for i, n in enumerate(sizes)]
    if workers <= 1 or len(jobs) == 1:
        return [fn(g, n) for g, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def concat_blocks(parts: Sequence) -> np.ndarray:
    return np.concatenate([np.asarray(p) for p in parts], axis=0)
