"""Estimate records shared by the estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

ESTIMATOR_IDS = ("naive", "tilted", "lower-bound")


@dataclass(frozen=True)
class TailEstimate:
    """A probability estimate kept on the log scale.

    ``std_log`` is the delta-method standard error of ``log_probability``
    (``se / p``).  ``probability`` and ``variance`` are derived and may
    underflow to zero for very rare events.
    """

    log_probability: float
    std_log: float
    replicas: int
    estimator_id: str
    seed: int | None
    hits: int | None = None
    effective_replicas: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.log_probability > 1e-12:
            raise ValueError(f"log-probability must be <= 0, got {self.log_probability}")
        if not self.std_log >= 0:
            raise ValueError("standard error must be nonnegative")
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ValueError(f"unknown estimator id {self.estimator_id!r}")

    @property
    def probability(self) -> float:
        return math.exp(self.log_probability) if self.log_probability > -math.inf else 0.0

    @property
    def std_error(self) -> float:
        return self.probability * self.std_log if math.isfinite(self.std_log) else math.inf

    @property
    def variance(self) -> float:
        return self.std_error**2

    @classmethod
    def from_hits(cls, hits: int, replicas: int, seed, estimator_id: str = "naive", **extra):
        """Binomial frequency estimate."""
        p = hits / replicas
        se = math.sqrt(p * (1.0 - p) / replicas)
        logp = math.log(p) if hits else -math.inf
        std_log = se / p if hits else math.inf
        return cls(logp, std_log, replicas, estimator_id, seed, hits=hits,
                   effective_replicas=float(replicas), extra=extra)

    @classmethod
    def from_log_weights(cls, log_y: np.ndarray, seed, estimator_id: str, **extra):
        """Mean of i.i.d. nonnegative terms ``exp(log_y)`` with its standard error."""
        log_y = np.asarray(log_y, dtype=float)
        n = log_y.size
        if n == 0 or not np.isfinite(log_y).any():
            return cls(-math.inf, math.inf, n, estimator_id, seed, hits=0,
                       effective_replicas=0.0, extra=extra)
        log_s1 = logsumexp(log_y)
        log_s2 = logsumexp(2.0 * log_y)
        logp = log_s1 - math.log(n)
        # sample variance of the terms relative to the mean squared
        rel_m2 = math.exp(log_s2 - 2.0 * log_s1) * n  # E[Y^2] / E[Y]^2
        var_ratio = max(rel_m2 - 1.0, 0.0) * n / max(n - 1, 1)
        std_log = math.sqrt(var_ratio / n)
        ess = math.exp(2.0 * log_s1 - log_s2)
        hits = int(np.isfinite(log_y).sum())
        return cls(min(logp, 0.0), std_log, n, estimator_id, seed, hits=hits,
                   effective_replicas=ess, extra=extra)


@dataclass(frozen=True)
class MeanEstimate:
    value: float
    std_error: float
    replicas: int
    seed: int | None

    @classmethod
    def from_samples(cls, x: np.ndarray, seed) -> "MeanEstimate":
        x = np.asarray(x, dtype=float)
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
        return cls(float(x.mean()), se, int(x.size), seed)
