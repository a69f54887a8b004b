"""Estimators of P(X_n >= n y) and of its speed exponent.

* ``naive_tail``: plain frequency.
* ``tilted_tail``: two-level importance sampling.  Given the local times,
  site x is tilted by lam * l(x) with lam solving sum_x l(x) Lambda'(lam l(x))
  = n y.  The outer walk is drawn either from the walk law or from a mixture
  of proposals that force K returns to the origin (a Doob transform of the
  hitting probability of the origin in a box) before running free; the
  event is driven by a pile-up of local time at one site, which the plain
  walk produces too rarely at large n y.
* ``lower_bound``: k returns, each within n/k steps, and one large scenery
  value at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import linregress

from . import _scenery_kernels as skern
from . import _walk_kernels as wkern
from .estimates import TailEstimate
from .process import sample_x
from .scenery import (
    LAW_GAUSS,
    LAW_LAPLACE,
    SceneryDistribution,
    log_mgf_derivative,
    log_mgf_values,
    log_tail,
    tilted_sample,
)
from .streams import map_chunks
from .walk import (
    DEFAULT_ROULETTE,
    LocalTimeField,
    Region,
    WalkConfig,
    box_hitting_probability,
    default_trap_radius,
    region_visits,
    trap_return_probability,
)

TAG_NAIVE = 31
TAG_TILTED = 32
TAG_LOWER = 33

LAMBDA_MAX = 1e3
BISECTION_ITERATIONS = 80
# tilt cap for alpha = 1: lam * max l(x) <= c (1 - LAPLACE_MARGIN)
LAPLACE_MARGIN = 1e-12


class TargetUnreachable(ValueError):
    pass


# ---------------------------------------------------------------------------
# naive
# ---------------------------------------------------------------------------

def naive_tail(config: WalkConfig, dist: SceneryDistribution, n: int, y: float, replicas: int,
               seed: int, workers: int | None = None) -> TailEstimate:
    if not y > 0:
        raise ValueError("y must be > 0")
    x, _, _ = sample_x(config, dist, n, replicas, seed, tag=TAG_NAIVE, workers=workers)
    hits = int(np.count_nonzero(x >= n * y))
    return TailEstimate.from_hits(hits, replicas, seed, "naive", n=n, y=y)


# ---------------------------------------------------------------------------
# tilting parameter
# ---------------------------------------------------------------------------

def _histogram(lt) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(lt, LocalTimeField):
        return lt.histogram()
    vals, mults = lt
    return np.asarray(vals, np.int64), np.asarray(mults, np.int64)


def tilting_parameter(lt, dist: SceneryDistribution, target: float) -> float:
    """Root lam* of sum_x l(x) Lambda'(lam l(x)) = target, by bisection.

    ``lt`` is a :class:`LocalTimeField` or a (values, multiplicities) pair.
    For alpha = 1 the root is searched below the MGF boundary
    lam max l(x) < c.
    """
    if not target > 0:
        raise ValueError("target must be > 0")
    vals, mults = _histogram(lt)
    v = vals.astype(float)
    w = (mults * vals).astype(float)

    def g(lam):
        theta = lam * v
        d = log_mgf_values_derivative(dist, theta)
        return float(np.dot(w, d)) - target

    if dist.law == LAW_GAUSS:
        return 2.0 * dist.c_alpha * target / float(np.dot(w, v))
    if dist.alpha == 1.0:
        lo, hi = 0.0, dist.c_alpha * (1.0 - LAPLACE_MARGIN) / v.max()
        if g(hi) < 0:
            return hi
    else:
        lo, hi = 0.0, 1.0 / v.max()
        while g(hi) < 0:
            lo, hi = hi, 2.0 * hi
            if hi > LAMBDA_MAX:
                raise TargetUnreachable(f"no tilt below {LAMBDA_MAX} reaches target {target}")
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-8 * hi:
            break
    return 0.5 * (lo + hi)


def log_mgf_values_derivative(dist: SceneryDistribution, theta: np.ndarray) -> np.ndarray:
    c = dist.c_alpha
    if dist.law == LAW_LAPLACE:
        return 2.0 * theta / (c * c - theta**2)
    if dist.law == LAW_GAUSS:
        return theta / (2.0 * c)
    return np.array([log_mgf_derivative(dist, float(t)) for t in np.ravel(theta)]).reshape(np.shape(theta))


@lru_cache(maxsize=32)
def _derivative_table(alpha: float, c: float, theta_top: float):
    """Monotone interpolant of log Lambda' against log theta, used to locate
    tilts quickly; the likelihood ratios always use the quadrature Lambda."""
    dist = SceneryDistribution(alpha, c)
    grid = np.geomspace(1e-8, theta_top, 400)
    vals = np.array([log_mgf_derivative(dist, t) for t in grid])
    return PchipInterpolator(np.log(grid), np.log(vals), extrapolate=False), grid[0], theta_top


def _fast_derivative(dist: SceneryDistribution, theta: np.ndarray) -> np.ndarray:
    if dist.law != 0:
        return log_mgf_values_derivative(dist, theta)
    top = 2.0 ** math.ceil(math.log2(max(float(theta.max()), 1.0)))
    f, t0, _ = _derivative_table(dist.alpha, dist.c_alpha, top)
    th = np.maximum(theta, t0)
    out = np.exp(f(np.log(th)))
    small = theta < t0
    out[small] = theta[small] * dist.second_moment
    return out


def _solve_tilts(vals, mults, offsets, dist: SceneryDistribution, target: float) -> np.ndarray:
    """Vectorised tilting parameters for every path of a ragged batch."""
    reps = offsets.size - 1
    idx = np.repeat(np.arange(reps), np.diff(offsets))
    v = vals.astype(float)
    w = (mults * vals).astype(float)
    if dist.law == LAW_GAUSS:
        q = np.bincount(idx, weights=w * v, minlength=reps)
        return 2.0 * dist.c_alpha * target / q
    vmax = np.maximum.reduceat(v, offsets[:-1])

    def g(lam):
        return np.bincount(idx, weights=w * _fast_derivative(dist, lam[idx] * v), minlength=reps) - target

    lo = np.zeros(reps)
    if dist.law == LAW_LAPLACE:
        hi = dist.c_alpha * (1.0 - LAPLACE_MARGIN) / vmax
        capped = g(hi) < 0
    else:
        hi = 1.0 / vmax
        capped = np.zeros(reps, bool)
        for _ in range(64):
            low = g(hi) < 0
            if not low.any():
                break
            lo = np.where(low, hi, lo)
            hi = np.where(low, 2.0 * hi, hi)
        if (hi > LAMBDA_MAX).any():
            raise TargetUnreachable(f"no tilt below {LAMBDA_MAX} reaches target {target}")
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        below = g(mid) < 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-8 * hi):
            break
    lam = 0.5 * (lo + hi)
    return np.where(capped, hi, lam)


def _log_partition(vals, mults, offsets, lam, dist: SceneryDistribution) -> np.ndarray:
    reps = offsets.size - 1
    idx = np.repeat(np.arange(reps), np.diff(offsets))
    theta = lam[idx] * vals
    return np.bincount(idx, weights=mults * log_mgf_values(dist, theta), minlength=reps)


def _tilted_inner_generic(rng, vals, mults, offsets, lam, logz, dist, inner, target):
    reps = offsets.size - 1
    log_hit = np.full(reps, -np.inf)
    log_all = np.empty(reps)
    for r in range(reps):
        x = np.zeros(inner)
        for j in range(offsets[r], offsets[r + 1]):
            v, m = int(vals[j]), int(mults[j])
            draws = tilted_sample(dist, lam[r] * v, inner * m, rng).reshape(inner, m)
            x += v * draws.sum(axis=1)
        lr = -lam[r] * x + logz[r]
        mx = lr.max()
        log_all[r] = mx + math.log(np.mean(np.exp(lr - mx)))
        hit = lr[x >= target]
        if hit.size:
            mh = hit.max()
            log_hit[r] = mh + math.log(np.sum(np.exp(hit - mh)) / inner)
    return log_hit, log_all


def _inner(rng, vals, mults, offsets, dist, target, inner):
    lam = _solve_tilts(vals, mults, offsets, dist, target)
    logz = _log_partition(vals, mults, offsets, lam, dist)
    if dist.law == 0:
        log_hit, log_all = _tilted_inner_generic(rng, vals, mults, offsets, lam, logz, dist,
                                                 inner, target)
    else:
        log_hit, log_all = skern.tilted_inner(rng, vals, mults, offsets, lam, logz, dist.law,
                                              dist.c_alpha, inner, float(target))
    return lam, log_hit, log_all


# ---------------------------------------------------------------------------
# outer proposal: forced returns to the origin
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrapMixture:
    """Mixture over the number K of forced returns (K = 0: the plain walk)."""

    radius: int
    kappa: float  # -log P(return to 0 before leaving the box)
    k_star: int
    k: np.ndarray
    log_weights: np.ndarray


def trap_mixture(config: WalkConfig, dist: SceneryDistribution, n: int, y: float,
                 radius: int | None = None, free_weight: float = 0.2,
                 flat_weight: float = 0.2) -> TrapMixture:
    R = default_trap_radius(config.d) if radius is None else int(radius)
    kappa = -math.log(trap_return_probability(config, R))
    cap = n if config.lazy else n // 2
    if cap < 1:
        return TrapMixture(R, kappa, 0, np.zeros(1, np.int64), np.zeros(1))
    ny = n * y
    ks = np.arange(1, cap + 1)
    # K returns give K + 1 visits; cost of the returns plus the scenery tail
    cost = kappa * ks - np.array([log_tail(dist, ny / (k + 1)) for k in ks])
    j = int(np.argmin(cost))
    k_star = int(ks[j])
    if 0 < j < ks.size - 1:
        curv = cost[j - 1] - 2 * cost[j] + cost[j + 1]
    else:
        curv = 0.0
    sd = max(1.0, 1.0 / math.sqrt(curv)) if curv > 0 else max(1.0, math.sqrt(k_star))
    w = np.zeros(cap + 1)
    w[0] = free_weight
    top = min(cap, int(math.ceil(2.5 * k_star)))
    w[1 : top + 1] += flat_weight / top
    lo, hi = max(1, int(k_star - 5 * sd)), min(cap, int(k_star + 5 * sd) + 1)
    g = np.exp(-0.5 * ((np.arange(lo, hi + 1) - k_star) / sd) ** 2)
    w[lo : hi + 1] += (1.0 - free_weight - flat_weight) * g / g.sum()
    keep = np.flatnonzero(w > 0)
    return TrapMixture(R, kappa, k_star, keep.astype(np.int64), np.log(w[keep] / w.sum()))


# ---------------------------------------------------------------------------
# tilted estimator
# ---------------------------------------------------------------------------

def tilted_tail(
    config: WalkConfig,
    dist: SceneryDistribution,
    n: int,
    y: float,
    outer_replicas: int,
    inner_replicas: int,
    seed: int,
    proposal: str | None = None,
    trap_radius: int | None = None,
    workers: int | None = None,
) -> TailEstimate:
    """Two-level importance-sampling estimate of P(X_n >= n y).

    ``proposal`` is ``"walk"`` (outer paths from the walk law) or ``"trap"``
    (forced-return mixture, the default for d >= 3).  The returned estimate
    averages, over outer paths, the outer likelihood ratio times the inner
    mean of exp(-lam X + sum_x Lambda(lam l(x))) 1{X >= n y}; its standard
    error is the spread of these per-path terms, which accounts for both
    levels.  ``extra["weight_identity"]`` holds the mean and standard error
    of the inner likelihood ratio without the indicator (should be 1).
    """
    if not y > 0:
        raise ValueError("y must be > 0")
    if inner_replicas < 1 or outer_replicas < 2:
        raise ValueError("need inner_replicas >= 1 and outer_replicas >= 2")
    if proposal is None:
        proposal = "trap" if config.d >= 3 else "walk"
    if proposal not in ("walk", "trap"):
        raise ValueError("proposal must be 'walk' or 'trap'")
    d, lazy, ny = config.d, config.lazy, n * y
    extra = {"n": n, "y": y, "proposal": proposal, "inner_replicas": inner_replicas}
    if proposal == "trap":
        mix = trap_mixture(config, dist, n, y, trap_radius)
        hbox = box_hitting_probability(d, mix.radius)
        extra.update(trap_radius=mix.radius, k_star=mix.k_star, trap_kappa=mix.kappa)

        def run(rng, size):
            log_w, comp, nret, vals, mults, offs = wkern.trap_kernel(
                rng, size, int(n), d, lazy, mix.radius, hbox, mix.k, mix.log_weights)
            lam, log_hit, log_all = _inner(rng, vals, mults, offs, dist, ny, inner_replicas)
            return log_w + log_hit, log_all, lam
    else:

        def run(rng, size):
            vals, mults, offs, _, _, _ = wkern.histogram_kernel(rng, size, int(n), d, lazy)
            lam, log_hit, log_all = _inner(rng, vals, mults, offs, dist, ny, inner_replicas)
            return log_hit, log_all, lam

    parts = map_chunks(run, outer_replicas, seed, TAG_TILTED, workers)
    log_y = np.concatenate([p[0] for p in parts])
    ident = np.exp(np.concatenate([p[1] for p in parts]))
    extra["weight_identity"] = (float(ident.mean()), float(ident.std(ddof=1) / math.sqrt(ident.size)))
    return TailEstimate.from_log_weights(log_y, seed, "tilted", **extra)


# ---------------------------------------------------------------------------
# analytic lower bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBound:
    """log of k log(p - P(n/k < H_0 <= T)) + log P(eta > n y / k)."""

    log_bound: float
    k: int
    kappa_hat: float
    bracket: float
    log_scenery_tail: float
    replicas: int
    seed: int


@dataclass(frozen=True)
class _ReturnLaw:
    p: float
    sample: object
    horizon: int

    def between(self, a: float) -> float:
        return self.sample.first_visit_between(a, self.horizon)[0]


def _return_law(config, replicas, seed, horizon, workers) -> _ReturnLaw:
    origin = Region.of([np.zeros(config.d, np.int64)], config.d)
    roulette = DEFAULT_ROULETTE if config.d >= 3 else 0
    s = region_visits(config, origin, replicas, seed, horizon, -1, 2, roulette, 2, workers)
    return _ReturnLaw(s.tail(2).probability, s, horizon)


def _bound(dist, n, y, k, law: _ReturnLaw, replicas, seed) -> LowerBound:
    bracket = law.p - law.between(n / k)
    lt = log_tail(dist, n * y / k)
    if bracket <= 0:
        raise ValueError(f"return-probability bracket is {bracket:.3g} <= 0; n = {n} is too small for k = {k}")
    return LowerBound(k * math.log(bracket) + lt, int(k), -math.log(law.p), bracket, lt, replicas, seed)


def lower_bound(config: WalkConfig, dist: SceneryDistribution, n: int, y: float, seed: int,
                k: int | None = None, replicas: int = 10**5, horizon: int = 10**6,
                workers: int | None = None) -> LowerBound:
    """Lower bound on log P(X_n >= n y), default k = floor((n y)^a)."""
    if not y > 0:
        raise ValueError("y must be > 0")
    if k is None:
        k = max(1, math.floor((n * y) ** dist.a))
    if k < 1:
        raise ValueError("k must be >= 1")
    law = _return_law(config, replicas, seed, horizon, workers)
    return _bound(dist, n, y, k, law, replicas, seed)


@dataclass(frozen=True)
class KScan:
    k: np.ndarray
    log_bound: np.ndarray  # -inf where the bracket is not positive

    @property
    def argmax(self) -> int:
        return int(self.k[int(np.argmax(self.log_bound))])


def lower_bound_scan(config: WalkConfig, dist: SceneryDistribution, n: int, y: float, seed: int,
                     k_values: Sequence[int] | None = None, replicas: int = 10**5,
                     horizon: int = 10**6, workers: int | None = None) -> KScan:
    """The bound for every k (default 1..3 (n y)^a), one shared return sample."""
    if k_values is None:
        k_values = np.arange(1, max(1, math.floor(3 * (n * y) ** dist.a)) + 1)
    law = _return_law(config, replicas, seed, horizon, workers)
    out = []
    for k in k_values:
        try:
            out.append(_bound(dist, n, y, int(k), law, replicas, seed).log_bound)
        except ValueError:
            out.append(-math.inf)
    return KScan(np.asarray(k_values, np.int64), np.array(out))


# ---------------------------------------------------------------------------
# exponent fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    """Least-squares line through (log(n y), log(-log P))."""

    points: tuple
    slope: float
    intercept: float
    residual_norm: float
    slope_std_error: float = field(default=math.nan)


def fit_exponent(points: Sequence[tuple[float, float]]) -> ExponentFit:
    """Fit from ``(ny, log_p)`` pairs, ``log_p`` the log of a probability in (0, 1)."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    ny = np.array([p[0] for p in pts])
    lp = np.array([p[1] for p in pts])
    if np.any(ny <= 0):
        raise ValueError("n y must be > 0")
    if not np.all(np.isfinite(lp)) or np.any(lp >= 0):
        raise ValueError("probabilities must lie strictly between 0 and 1")
    xs, ys = np.log(ny), np.log(-lp)
    fit = linregress(xs, ys)
    resid = ys - (fit.intercept + fit.slope * xs)
    return ExponentFit(tuple(zip(ny.tolist(), ys.tolist())), float(fit.slope), float(fit.intercept),
                       float(np.linalg.norm(resid)), float(fit.stderr))


@dataclass(frozen=True)
class ExponentSweep:
    """Tail estimates over a list of n at fixed y, with the exponent fit."""

    n: tuple
    y: float
    estimates: tuple
    fit: ExponentFit


def exponent_sweep(config: WalkConfig, dist: SceneryDistribution, n_values: Sequence[int],
                   y: float, outer_replicas: int, inner_replicas: int, seed: int,
                   estimator: str = "tilted", workers: int | None = None) -> ExponentSweep:
    """Estimate log P(X_n >= n y) for each n and fit log(-log P) on log(n y)."""
    if estimator not in ("tilted", "naive"):
        raise ValueError("estimator must be 'tilted' or 'naive'")
    ests = []
    for n in n_values:
        if estimator == "tilted":
            ests.append(tilted_tail(config, dist, int(n), y, outer_replicas, inner_replicas,
                                    seed, workers=workers))
        else:
            ests.append(naive_tail(config, dist, int(n), y, outer_replicas, seed, workers=workers))
    fit = fit_exponent([(n * y, e.log_probability) for n, e in zip(n_values, ests)])
    return ExponentSweep(tuple(int(n) for n in n_values), float(y), tuple(ests), fit)
