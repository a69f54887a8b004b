"""Replica-parallel random streams.

Replicas are grouped in fixed-size chunks.  Chunk ``j`` of a run seeded with
``seed`` always draws from ``PCG64(SeedSequence(seed, spawn_key=(tag, j)))``,
so results depend only on ``(inputs, seed)`` and never on how many workers
processed the chunks.  Per-chunk outputs are concatenated in chunk order before
any reduction.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

CHUNK_SIZE = 4096

T = TypeVar("T")

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def worker_count() -> int:
    """Number of worker threads, capped by the ``RWRS_THREADS`` env var."""
    cpus = os.cpu_count() or 1
    cap = os.environ.get("RWRS_THREADS")
    if cap:
        try:
            return max(1, min(cpus, int(cap)))
        except ValueError:
            pass
    return cpus


def chunk_generator(seed: int, tag: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag), int(chunk)))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_sizes(replicas: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    full, rest = divmod(int(replicas), chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[np.random.Generator, int], T],
    replicas: int,
    seed: int,
    tag: int,
    workers: int | None = None,
) -> list[T]:
    """Run ``fn(rng, size)`` on every chunk and return results in chunk order.

    ``fn`` should release the GIL (numba ``nogil`` kernels) to benefit from
    more than one worker.
    """
    sizes = chunk_sizes(replicas)
    jobs = [(chunk_generator(seed, tag, j), s) for j, s in enumerate(sizes)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(rng, s) for rng, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorised SplitMix64 finaliser on uint64 input (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def site_uniforms(seed: int, sites: np.ndarray, stream: int = 0) -> np.ndarray:
    """Uniforms in (0, 1) that are a pure function of ``(seed, site, stream)``.

    Used to key scenery values by site so that the value at a site never
    depends on the order in which sites are queried.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    with np.errstate(over="ignore"):
        h = splitmix64(np.full(sites.shape[0], np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)))
        h = splitmix64(h ^ np.uint64(stream))
        for i in range(sites.shape[1]):
            h = splitmix64(h ^ sites[:, i].astype(np.uint64))
    # 53 high bits -> (0, 1)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) / 2.0**53
