"""The RWRS sum X_n = sum_x l_n(x) eta(x) and its second moment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _scenery_kernels as skern
from . import _walk_kernels as wkern
from .scenery import SceneryDistribution, SceneryField
from .streams import map_chunks
from .walk import LocalTimeField, WalkConfig, local_times, simulate_path

TAG_MOMENTS = 21


@dataclass(frozen=True, eq=False)
class RwrsSample:
    local_times: LocalTimeField
    scenery_values: np.ndarray  # aligned with local_times.sites
    x_n: float


def evaluate_x(lt: LocalTimeField, scenery: SceneryField) -> float:
    """Exact (compensated) sum of l(x) * eta(x) over the range."""
    eta = scenery.values(lt.sites)
    return math.fsum((lt.counts * eta).tolist())


def sample_rwrs(config: WalkConfig, dist: SceneryDistribution, n: int, seed: int,
                replica: int = 0) -> RwrsSample:
    """Walk and scenery number ``replica`` of the run seeded with ``seed``."""
    lt = local_times(simulate_path(config, n, seed, replica))
    field = SceneryField(dist, seed, replica=replica)
    eta = field.values(lt.sites)
    return RwrsSample(lt, eta, math.fsum((lt.counts * eta).tolist()))


def sample_x(config: WalkConfig, dist: SceneryDistribution, n: int, replicas: int, seed: int,
             tag: int = TAG_MOMENTS, workers: int | None = None):
    """X_n and sum_x l_n(x)^2 for a batch of independent (walk, scenery) pairs."""
    d, lazy = config.d, config.lazy

    def run(rng, size):
        vals, mults, offs, ss, ml, rs = wkern.histogram_kernel(rng, size, int(n), d, lazy)
        x = skern.naive_sums(rng, vals, mults, offs, dist.law, dist.alpha, dist.c_alpha)
        return x, ss, ml

    parts = map_chunks(run, replicas, seed, tag, workers)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


@dataclass(frozen=True)
class SecondMoment:
    """E[X_n^2] two ways and the paired check of the decoupling identity.

    ``decoupled`` estimates E[eta^2] E[sum_x l_n(x)^2]; ``z`` is the mean of
    the per-replica differences in units of its standard error.
    """

    n: int
    value: float
    std_error: float
    decoupled: float
    decoupled_std_error: float
    z: float
    replicas: int
    seed: int


def second_moment(config: WalkConfig, dist: SceneryDistribution, n: int, replicas: int,
                  seed: int, workers: int | None = None) -> SecondMoment:
    if n < 1:
        raise ValueError("n must be >= 1")
    x, ss, _ = sample_x(config, dist, n, replicas, seed, workers=workers)
    x2 = x * x
    dec = dist.second_moment * ss.astype(float)
    diff = x2 - dec
    k = math.sqrt(replicas)
    se_diff = diff.std(ddof=1) / k
    z = float(diff.mean() / se_diff) if se_diff > 0 else 0.0
    return SecondMoment(int(n), float(x2.mean()), float(x2.std(ddof=1) / k), float(dec.mean()),
                        float(dec.std(ddof=1) / k), z, int(replicas), seed)
