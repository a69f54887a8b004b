"""Lattice random walks: paths, local times, sojourn times and return statistics.

Batch estimators run compiled kernels over fixed-size replica chunks (see
:mod:`rwrs.streams`), so every estimate is a pure function of its inputs and
seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg
from scipy.stats import linregress

from . import _walk_kernels as kern
from .estimates import MeanEstimate, TailEstimate
from .streams import chunk_generator, map_chunks

INCREMENT_LAWS = ("simple", "lazy-simple")

# stream tags, one per kind of experiment
TAG_PATH = 1
TAG_VISITS = 2
TAG_HISTOGRAM = 3
TAG_TRAP = 4

DEFAULT_HORIZON = 10**6
DEFAULT_ROULETTE = 8


@dataclass(frozen=True)
class WalkConfig:
    d: int
    increment_law: str = "simple"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if self.increment_law not in INCREMENT_LAWS:
            raise ValueError(f"increment law must be one of {INCREMENT_LAWS}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def lazy(self) -> bool:
        return self.increment_law == "lazy-simple"


@dataclass(frozen=True, eq=False)
class Path:
    """Positions S_0..S_n as an ``(n + 1, d)`` integer array."""

    config: WalkConfig
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[1] != self.config.d or pos.shape[0] < 1:
            raise ValueError("positions must have shape (n + 1, d)")
        if np.any(pos[0] != 0):
            raise ValueError("a path starts at the origin")
        inc = np.abs(np.diff(pos, axis=0)).sum(axis=1)
        allowed = (0, 1) if self.config.lazy else (1,)
        if not np.isin(inc, allowed).all():
            raise ValueError("consecutive positions must differ by a legal increment")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0] - 1


def _as_site(site, d: int) -> tuple[int, ...]:
    t = tuple(int(v) for v in np.atleast_1d(site))
    if len(t) != d:
        raise ValueError(f"site {site!r} is not a point of Z^{d}")
    return t


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Occupation counts l_n(x) on the range, stored as parallel arrays."""

    sites: np.ndarray
    counts: np.ndarray
    total_time: int

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if sites.ndim != 2 or sites.shape[0] != counts.shape[0]:
            raise ValueError("sites must be (k, d) with one count per site")
        if counts.size and counts.min() < 1:
            raise ValueError("stored counts must be >= 1")
        if int(counts.sum()) != self.total_time + 1:
            raise ValueError("local times must sum to total_time + 1")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "_index", {tuple(s): i for i, s in enumerate(sites.tolist())})

    @classmethod
    def from_mapping(cls, mapping: Mapping, d: int | None = None) -> "LocalTimeField":
        if not mapping:
            raise ValueError("a local-time field has at least one site")
        if d is None:
            d = len(np.atleast_1d(next(iter(mapping))))
        sites = np.array([_as_site(s, d) for s in mapping], dtype=np.int64).reshape(-1, d)
        counts = np.array(list(mapping.values()), dtype=np.int64)
        return cls(sites, counts, int(counts.sum()) - 1)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def __len__(self) -> int:
        return self.counts.size

    def __getitem__(self, site) -> int:
        i = self._index.get(_as_site(site, self.d))
        return 0 if i is None else int(self.counts[i])

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(s): int(c) for s, c in zip(self.sites.tolist(), self.counts)}

    @property
    def range_size(self) -> int:
        return len(self)

    @property
    def self_intersection(self) -> int:
        return int(np.dot(self.counts, self.counts))

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct local-time values and how many sites carry each."""
        return np.unique(self.counts, return_counts=True)


def simulate_path(config: WalkConfig, n: int, seed: int, replica: int = 0) -> Path:
    """Path number ``replica`` of the run seeded with ``seed``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    d = config.d
    rng = chunk_generator(seed, TAG_PATH, replica)
    move = rng.integers(0, 2 * d, size=n)
    steps = np.zeros((n, d), np.int64)
    steps[np.arange(n), move >> 1] = 1 - 2 * (move & 1)
    if config.lazy:
        steps[rng.random(n) < 0.5] = 0
    positions = np.zeros((n + 1, d), np.int64)
    np.cumsum(steps, axis=0, out=positions[1:])
    return Path(config, positions)


def local_times(path: Path) -> LocalTimeField:
    """Sites sorted lexicographically, as ``np.unique(axis=0)`` would."""
    pos = path.positions
    srt = pos[np.lexsort(pos.T[::-1])]
    new = np.ones(srt.shape[0], np.bool_)
    new[1:] = np.any(srt[1:] != srt[:-1], axis=1)
    start = np.flatnonzero(new)
    counts = np.diff(np.append(start, srt.shape[0]))
    return LocalTimeField(srt[start], counts, path.n)


def max_displacement(path: Path) -> int:
    return int(np.abs(path.positions).max())


# ---------------------------------------------------------------------------
# regions and visit statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Region:
    """A finite site set as a bounding box with a membership mask."""

    sites: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mask: np.ndarray

    @classmethod
    def of(cls, sites: Iterable, d: int) -> "Region":
        arr = np.array([_as_site(s, d) for s in sites], dtype=np.int64).reshape(-1, d)
        arr = np.unique(arr, axis=0)
        if arr.shape[0] == 0:
            z = np.zeros(d, np.int64)
            return cls(arr, z, z, np.zeros(1, np.bool_))
        lo, hi = arr.min(axis=0), arr.max(axis=0)
        shape = tuple(hi - lo + 1)
        box = np.zeros(shape, np.bool_)
        box[tuple((arr - lo).T)] = True
        # first coordinate varies fastest, as in the kernels
        return cls(arr, lo, hi, box.ravel(order="F"))

    @classmethod
    def box(cls, side: int, d: int) -> "Region":
        """Cube of ``side`` sites per axis containing the origin, {-side//2, ..}."""
        lo = -(side // 2)
        axes = [np.arange(lo, lo + side)] * d
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return cls.of(grid, d)

    @property
    def empty(self) -> bool:
        return self.sites.shape[0] == 0

    @property
    def diameter(self) -> int:
        return 0 if self.empty else int((self.hi - self.lo).max())

    @property
    def radius(self) -> int:
        return 0 if self.empty else int(np.abs(self.sites).max())


@dataclass(frozen=True, eq=False)
class VisitSample:
    """Visits of a batch of walks to a region.

    Per replica: ``counts`` (time 0 included), ``first`` visit time after 0
    (-1 if none), ``flags`` (0 exit, 1 horizon, 2 visit cap, 3 removed by
    roulette), ``weighted_visits`` and ``first_weight``.  Per visit index j:
    ``s1[j]``, ``s2[j]`` sum the weight carried at visit j + 1 and its square,
    ``hits[j]`` counts replicas that made it.  Without roulette every weight
    is 1.
    """

    counts: np.ndarray
    first: np.ndarray
    flags: np.ndarray
    weighted_visits: np.ndarray
    first_weight: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    hits: np.ndarray
    replicas: int
    seed: int
    horizon: int
    roulette: int

    @property
    def truncation_rate(self) -> float:
        return float(np.mean(self.flags == 1)) if self.replicas else 0.0

    def tail(self, k: int) -> TailEstimate:
        """Estimate of P(at least ``k`` visits)."""
        if not 1 <= k <= self.s1.size:
            raise ValueError(f"visit index {k} was not recorded (1..{self.s1.size})")
        n = self.replicas
        m1 = self.s1[k - 1] / n
        hits = int(self.hits[k - 1])
        if hits == 0:
            return TailEstimate(-math.inf, math.inf, n, "naive", self.seed, hits=0,
                                effective_replicas=0.0)
        var = max(self.s2[k - 1] / n - m1 * m1, 0.0) * n / max(n - 1, 1)
        se = math.sqrt(var / n)
        return TailEstimate(min(math.log(m1), 0.0), se / m1, n, "naive", self.seed,
                            hits=hits, effective_replicas=float(n),
                            extra={"horizon": self.horizon, "roulette": self.roulette})

    def first_visit_between(self, a: float, b: float) -> tuple[float, float]:
        """Estimate and standard error of P(a < first visit time <= b)."""
        sel = (self.first > a) & (self.first <= b)
        y = np.where(sel, self.first_weight, 0.0)
        return float(y.mean()), float(y.std(ddof=1) / math.sqrt(y.size))


def region_visits(
    config: WalkConfig,
    region: Region,
    replicas: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    escape_radius: int = -1,
    visit_cap: int = 0,
    roulette: int = 0,
    record: int = 0,
    workers: int | None = None,
) -> VisitSample:
    """Run ``replicas`` walks against ``region`` (see :class:`VisitSample`).

    ``visit_cap > 0`` stops a walk at its ``visit_cap``-th visit, ``roulette
    = D0 > 0`` enables weight-doubling removal of walks at l1-distances
    ``D0 * 2**j`` from the region, ``record`` is the number of visit indices
    tracked in ``s1``/``s2``/``hits``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if region.empty:
        z = np.zeros(replicas, np.int64)
        zf = np.zeros(replicas)
        return VisitSample(z, z - 1, np.zeros(replicas, np.int8), zf, zf, np.zeros(record),
                           np.zeros(record), np.zeros(record, np.int64), replicas, seed,
                           horizon, roulette)
    d, lazy = config.d, config.lazy

    def run(rng, size):
        return kern.visits_kernel(rng, size, d, lazy, region.lo, region.hi, region.mask,
                                  int(horizon), int(escape_radius), int(visit_cap),
                                  int(roulette), int(record))

    parts = map_chunks(run, replicas, seed, TAG_VISITS, workers)
    cat = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    sums = [np.sum([p[i] for p in parts], axis=0) for i in range(5, 8)]
    return VisitSample(*cat, *sums, replicas, seed, int(horizon), int(roulette))


@dataclass(frozen=True)
class SojournResult:
    count: int
    truncated: bool


def _escape_radius(region: Region, escape_radius: int | None) -> int:
    if escape_radius is None:
        escape_radius = 64 * max(1, region.diameter)
    if 2 * region.radius > escape_radius:
        raise ValueError("the region must lie inside the ball of half the escape radius")
    return int(escape_radius)


def _require_transient(config: WalkConfig, what: str):
    if config.d <= 2:
        raise ValueError(f"{what} is infinite for the recurrent walk in d = {config.d}")


def sojourn_times(
    config: WalkConfig,
    region: Region | Iterable,
    replicas: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    escape_radius: int | None = None,
    record: int = 0,
    roulette: int = 0,
    workers: int | None = None,
) -> VisitSample:
    """Occupation of ``region`` up to the horizon or the first exit from the
    sup-ball of ``escape_radius`` (default 64 times the region's diameter)."""
    _require_transient(config, "the sojourn time")
    if not isinstance(region, Region):
        region = Region.of(region, config.d)
    radius = _escape_radius(region, escape_radius)
    return region_visits(config, region, replicas, seed, horizon, radius, 0, roulette,
                         record, workers)


def sojourn_time(
    config: WalkConfig,
    region: Region | Iterable,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    escape_radius: int | None = None,
) -> SojournResult:
    s = sojourn_times(config, region, 1, seed, horizon, escape_radius, workers=1)
    return SojournResult(int(s.counts[0]), bool(s.flags[0] == 1))


@dataclass(frozen=True)
class LocalizationFit:
    """Fit of -log P(l(box) > t) against t / side**2 for one cube.

    ``t`` runs from the median of the sojourn time to the largest value with
    at least ``min_hits`` replicas beyond it.
    """

    side: int
    t: np.ndarray
    log_p: np.ndarray
    std_log: np.ndarray
    hits: np.ndarray
    slope: float
    intercept: float
    replicas: int
    seed: int

    @property
    def scale(self) -> int:
        return self.side**2


def localization_fit(
    config: WalkConfig,
    side: int,
    replicas: int,
    seed: int,
    points: int = 8,
    min_hits: int = 100,
    horizon: int = DEFAULT_HORIZON,
    workers: int | None = None,
) -> LocalizationFit:
    """Tail of the total time spent in :meth:`Region.box` ``(side, d)``."""
    _require_transient(config, "the sojourn time")
    if side < 1 or points < 2:
        raise ValueError("need side >= 1 and points >= 2")
    region = Region.box(side, config.d)
    # sojourns scale like side**2; leave room for the far tail
    record = max(64, 200 * side * side)
    s = region_visits(config, region, replicas, seed, horizon, -1, 0,
                      max(DEFAULT_ROULETTE, 2 * side), record, workers)
    p = s.s1 / replicas  # p[t] = P(l > t)
    if s.hits[-1] >= min_hits:
        raise RuntimeError("visit record too short for the requested hit floor")
    t_med = int(np.argmax(p <= 0.5))
    ok = np.flatnonzero(s.hits >= min_hits)
    t_max = int(ok.max())
    if t_max <= t_med:
        raise RuntimeError(f"no tail range with {min_hits} hits for side {side}")
    t = np.unique(np.linspace(t_med, t_max, points).round().astype(np.int64))
    est = [s.tail(int(k) + 1) for k in t]
    log_p = np.array([e.log_probability for e in est])
    fit = linregress(t / side**2, -log_p)
    return LocalizationFit(int(side), t, log_p, np.array([e.std_log for e in est]),
                           s.hits[t].copy(), float(fit.slope), float(fit.intercept),
                           int(replicas), seed)


def estimate_return_prob(
    config: WalkConfig,
    replicas: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    roulette: int | None = None,
    workers: int | None = None,
) -> TailEstimate:
    """P(return to the origin by ``horizon``), an estimate of P_0(H_0 < inf).

    The horizon cuts the tail of the return-time law, a downward bias of
    order ``horizon ** (1 - d / 2)`` in d >= 3.  For d >= 3 walks drifting
    away are pruned by roulette (unbiased, default ``D0 = 8``).
    """
    if config.d <= 2:
        warnings.warn("the return probability is 1 for d <= 2; the estimate only "
                      "approaches it as the horizon grows", stacklevel=2)
    if roulette is None:
        roulette = DEFAULT_ROULETTE if config.d >= 3 else 0
    origin = Region.of([np.zeros(config.d, np.int64)], config.d)
    s = region_visits(config, origin, replicas, seed, horizon, -1, 2, roulette, 2, workers)
    est = s.tail(2)
    p = est.probability
    extra = dict(est.extra, kappa=-math.log(p) if p > 0 else math.inf)
    return TailEstimate(est.log_probability, est.std_log, replicas, "naive", seed,
                        hits=est.hits, effective_replicas=est.effective_replicas, extra=extra)


def local_time_tail(
    config: WalkConfig,
    k: int,
    replicas: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    roulette: int | None = None,
    workers: int | None = None,
) -> TailEstimate:
    """P_0(l(0) >= k) for the occupation of the origin up to ``horizon``."""
    return local_time_tails(config, k, replicas, seed, horizon, roulette, workers)[k - 1]


def local_time_tails(
    config: WalkConfig,
    kmax: int,
    replicas: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    roulette: int | None = None,
    workers: int | None = None,
) -> list[TailEstimate]:
    """Estimates of P_0(l(0) >= k) for k = 1..kmax from one batch."""
    _require_transient(config, "the total local time")
    if kmax < 1:
        raise ValueError("k must be >= 1")
    if roulette is None:
        roulette = DEFAULT_ROULETTE
    origin = Region.of([np.zeros(config.d, np.int64)], config.d)
    s = region_visits(config, origin, replicas, seed, horizon, -1, kmax, roulette, kmax,
                      workers)
    return [s.tail(k) for k in range(1, kmax + 1)]


def green_function(
    config: WalkConfig,
    target,
    replicas: int,
    seed: int,
    horizon: int = DEFAULT_HORIZON,
    roulette: int | None = None,
    workers: int | None = None,
) -> MeanEstimate:
    """G(0, y) = E_0[l(y)], the expected number of visits to ``target``."""
    _require_transient(config, "the Green function")
    if roulette is None:
        roulette = DEFAULT_ROULETTE
    region = Region.of([target], config.d)
    s = region_visits(config, region, replicas, seed, horizon, -1, 0, roulette, 0, workers)
    return MeanEstimate.from_samples(s.weighted_visits, seed)


# ---------------------------------------------------------------------------
# local-time histograms of whole batches
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HistogramBatch:
    """Local-time histograms of ``replicas`` independent n-step paths.

    Path r owns ``values[offsets[r]:offsets[r+1]]`` (distinct local times)
    with ``mults`` sites each.
    """

    values: np.ndarray
    mults: np.ndarray
    offsets: np.ndarray
    self_intersection: np.ndarray
    max_local_time: np.ndarray
    range_size: np.ndarray
    n: int
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.offsets.size - 1

    def path(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.offsets[r], self.offsets[r + 1]
        return self.values[a:b], self.mults[a:b]


def _merge_ragged(parts, vi: int, mi: int, oi: int):
    values = np.concatenate([p[vi] for p in parts])
    mults = np.concatenate([p[mi] for p in parts])
    offs = [np.zeros(1, np.int64)]
    base = 0
    for p in parts:
        offs.append(p[oi][1:] + base)
        base += p[oi][-1]
    return values, mults, np.concatenate(offs)


def local_time_histograms(
    config: WalkConfig, n: int, replicas: int, seed: int, workers: int | None = None
) -> HistogramBatch:
    if n < 0:
        raise ValueError("n must be >= 0")
    d, lazy = config.d, config.lazy

    def run(rng, size):
        return kern.histogram_kernel(rng, size, int(n), d, lazy)

    parts = map_chunks(run, replicas, seed, TAG_HISTOGRAM, workers)
    values, mults, offsets = _merge_ragged(parts, 0, 1, 2)
    rest = [np.concatenate([p[i] for p in parts]) for i in (3, 4, 5)]
    return HistogramBatch(values, mults, offsets, *rest, n=int(n), seed=seed)


# ---------------------------------------------------------------------------
# hitting probabilities of the origin inside a box
# ---------------------------------------------------------------------------

def default_trap_radius(d: int) -> int:
    """Largest box radius with at most about 4e4 sites."""
    r = 1
    while (2 * (r + 1) + 1) ** d <= 40000:
        r += 1
    return r


@lru_cache(maxsize=16)
def box_hitting_probability(d: int, R: int) -> np.ndarray:
    """h(x) = P_x(hit 0 before leaving the sup-ball of radius R).

    Returned flat with the first coordinate varying fastest, h(0) = 1.  The
    same function serves the simple and the lazy walk.
    """
    side = 2 * R + 1
    lap1 = sp.diags([np.ones(side - 1), np.ones(side - 1)], [-1, 1], format="csr")
    eye1 = sp.identity(side, format="csr")
    adj = sp.csr_matrix((side**d, side**d))
    for i in range(d):
        term = None
        for j in range(d):
            f = lap1 if j == i else eye1
            term = f if term is None else sp.kron(f, term, format="csr")
        adj = adj + term
    # index with x_0 fastest; origin sits at the centre
    origin = sum(R * side**i for i in range(d))
    P = adj / (2 * d)
    keep = np.ones(side**d, bool)
    keep[origin] = False
    A = sp.identity(side**d, format="csr")[keep][:, keep] - P[keep][:, keep]
    b = np.asarray(P[keep][:, [origin]].todense()).ravel()
    h_in, info = cg(A.tocsr(), b, rtol=1e-12, atol=0.0, maxiter=20000)
    if info != 0:
        raise RuntimeError("hitting-probability solve did not converge")
    h = np.empty(side**d)
    h[keep] = h_in
    h[origin] = 1.0
    h.setflags(write=False)
    return h


def trap_return_probability(config: WalkConfig, R: int) -> float:
    """P_0(return to 0 before leaving the box of radius R), one-step form."""
    d = config.d
    h = box_hitting_probability(d, R)
    side = 2 * R + 1
    origin = sum(R * side**i for i in range(d))
    nb = sum(h[origin + side**i] + h[origin - side**i] for i in range(d)) / (2 * d)
    return 0.5 + 0.5 * nb if config.lazy else nb
