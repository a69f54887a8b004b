"""Densities sampled on symmetric uniform grids.

A :class:`GridDensity` stores values at the M + 1 nodes t_j = -W + j h,
h = 2W / M (M even, so t = 0 is a node).  Integrals use the trapezoid rule,
which is exact for the piecewise-linear interpolant used everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .scenery import SceneryDistribution, log_tail
from .streams import chunk_generator

TAG_WEIGHTED = 51
MAX_GRID_COEFFS = 32


@dataclass(frozen=True, eq=False)
class GridDensity:
    half_width: float
    bins: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.bins % 2 or self.bins < 2:
            raise ValueError("bins must be a positive even integer")
        if v.shape != (self.bins + 1,):
            raise ValueError(f"expected {self.bins + 1} node values, got {v.shape}")
        if not self.half_width > 0:
            raise ValueError("half width must be > 0")
        if v.min() < 0:
            raise ValueError("density values must be >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.bins

    @property
    def nodes(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.bins + 1)

    @property
    def mass(self) -> float:
        v = self.values
        return float(self.spacing * (v.sum() - 0.5 * (v[0] + v[-1])))

    @classmethod
    def from_function(cls, f, half_width: float, bins: int) -> "GridDensity":
        t = -half_width + (2.0 * half_width / bins) * np.arange(bins + 1)
        # evaluate on |t| so the rendering is exactly even
        return cls(half_width, bins, f(np.abs(t)))

    @classmethod
    def from_distribution(cls, dist: SceneryDistribution, spacing: float, scale: float = 1.0,
                          tail_mass: float = 1e-10) -> "GridDensity":
        """Density of ``scale * eta`` with the support cut where P(|.| > W) < tail_mass."""
        target = math.log(tail_mass / 2.0)
        w = 1.0
        while log_tail(dist, w) > target:
            w *= 1.25
        half = math.ceil(scale * w / spacing)
        W = half * spacing
        gd = cls.from_function(lambda t: dist.density(t / scale) / scale, W, 2 * half)
        # rescale so the trapezoid mass is exactly the mass inside [-W, W];
        # the rule is not exact at the cusp of the alpha = 1 law
        inside = 1.0 - 2.0 * math.exp(log_tail(dist, W / scale))
        return cls(W, 2 * half, gd.values * (inside / gd.mass))

    def value_at(self, t):
        return np.interp(t, self.nodes, self.values, left=0.0, right=0.0)

    def tail(self, y: float) -> float:
        """Integral of the interpolant over [y, W]."""
        x, v, h = self.nodes, self.values, self.spacing
        if y >= self.half_width:
            return 0.0
        if y <= -self.half_width:
            return self.mass
        j = int(math.floor((y + self.half_width) / h))
        j = min(j, self.bins - 1)
        vy = float(np.interp(y, x, v))
        part = 0.5 * (vy + v[j + 1]) * (x[j + 1] - y)
        rest = v[j + 1 :]
        return float(part + h * (rest.sum() - 0.5 * (rest[0] + rest[-1])))


@dataclass(frozen=True)
class BellShapeReport:
    ok: bool
    kind: str | None = None  # "even" or "increasing"
    index: int | None = None
    location: float | None = None
    excess: float = 0.0

    def __bool__(self) -> bool:
        return self.ok


def is_bell_shaped(gd: GridDensity, tol: float = 1e-12) -> BellShapeReport:
    """Even and nonincreasing on [0, W], both up to ``tol`` times the peak value."""
    v = gd.values
    scale = max(float(v.max()), 1e-300)
    asym = np.abs(v - v[::-1])
    bad = np.flatnonzero(asym > tol * scale)
    if bad.size:
        j = int(bad[0])
        return BellShapeReport(False, "even", j, float(gd.nodes[j]), float(asym[j]))
    half = v[gd.bins // 2 :]
    rise = np.diff(half)
    bad = np.flatnonzero(rise > tol * scale)
    if bad.size:
        j = int(bad[0]) + gd.bins // 2 + 1
        return BellShapeReport(False, "increasing", j, float(gd.nodes[j]), float(rise[bad[0]]))
    return BellShapeReport(True)


def convolve(f: GridDensity, g: GridDensity, method: str = "auto") -> GridDensity:
    """Density of the sum of independent variables with densities f and g."""
    h = f.spacing
    if abs(g.spacing - h) > 1e-12 * h:
        raise ValueError(f"grid spacings differ: {f.spacing} vs {g.spacing}")
    if method == "auto":
        method = "direct" if f.values.size * g.values.size <= 5e7 else "fft"
    if method == "direct":
        out = np.convolve(f.values, g.values) * h
    elif method == "fft":
        out = np.clip(fftconvolve(f.values, g.values) * h, 0.0, None)
    else:
        raise ValueError("method must be 'direct', 'fft' or 'auto'")
    return GridDensity(f.half_width + g.half_width, f.bins + g.bins, out)


@dataclass(frozen=True)
class WeightedTail:
    probability: float
    std_error: float
    method: str


def _mc_draws(dist: SceneryDistribution, count: int, replicas: int, seed: int) -> np.ndarray:
    rng = chunk_generator(seed, TAG_WEIGHTED, 0)
    g = rng.gamma(1.0 / dist.alpha, 1.0, size=(replicas, count))
    return dist.from_gamma(g, rng.random((replicas, count)) < 0.5)


def weighted_tail(coeffs, dist: SceneryDistribution, y: float, method: str = "mc",
                  replicas: int = 10**5, seed: int = 0, spacing: float = 2.0**-8,
                  draws: np.ndarray | None = None) -> WeightedTail:
    """P(sum_j coeffs[j] eta_j > y).

    ``draws`` (replicas x len(coeffs)) supplies the scenery values for Monte
    Carlo so that several coefficient vectors can share them.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or np.any(c <= 0):
        raise ValueError("coefficients must be a nonempty vector of positive reals")
    if not y > 0:
        raise ValueError("y must be > 0")
    if method == "mc":
        eta = _mc_draws(dist, c.size, replicas, seed) if draws is None else draws
        hit = (eta @ c) > y
        p = float(hit.mean())
        return WeightedTail(p, math.sqrt(p * (1 - p) / hit.size), "mc")
    if method != "grid":
        raise ValueError("method must be 'mc' or 'grid'")
    if c.size > MAX_GRID_COEFFS:
        raise ValueError(f"grid method handles at most {MAX_GRID_COEFFS} coefficients")
    total = None
    for cj in c:
        gd = GridDensity.from_distribution(dist, spacing, scale=cj)
        total = gd if total is None else convolve(total, gd)
    return WeightedTail(total.tail(y), 0.0, "grid")


@dataclass(frozen=True)
class MonotonicityCheck:
    """Paired comparison of P(sum alpha_j eta_j > y) <= P(sum beta_j eta_j > y)."""

    p_small: float
    p_large: float
    diff_std_error: float

    @property
    def violated(self) -> bool:
        return self.p_small > self.p_large + 2.0 * self.diff_std_error


def coefficient_monotonicity(small, large, dist: SceneryDistribution, y: float, replicas: int,
                             seed: int) -> MonotonicityCheck:
    small, large = np.asarray(small, float), np.asarray(large, float)
    if small.shape != large.shape or np.any(small > large):
        raise ValueError("need small <= large componentwise")
    eta = _mc_draws(dist, small.size, replicas, seed)
    a = (eta @ small) > y
    b = (eta @ large) > y
    diff = b.astype(float) - a.astype(float)
    se = float(diff.std(ddof=1) / math.sqrt(replicas))
    return MonotonicityCheck(float(a.mean()), float(b.mean()), se)


def symmetric_sum_identity_check(f: GridDensity, g: GridDensity, y: float) -> float:
    """|P(xi + eta > y) - P(xi > y) - int_0^inf P(eta > z)(f(|y - z|) - f(y + z)) dz|
    for xi ~ f, eta ~ g, all pieces by grid quadrature."""
    if not y > 0:
        raise ValueError("y must be > 0")
    lhs = convolve(f, g).tail(y) - f.tail(y)
    h = g.spacing
    z = g.nodes[g.bins // 2 :]
    v = g.values[g.bins // 2 :]
    # P(eta > z) at the nodes z >= 0, trapezoid from the right
    seg = 0.5 * h * (v[1:] + v[:-1])
    tail_g = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    kern = f.value_at(np.abs(y - z)) - f.value_at(y + z)
    w = tail_g * kern
    rhs = h * (w.sum() - 0.5 * (w[0] + w[-1]))
    return float(abs(lhs - rhs))


@dataclass(frozen=True)
class SuiteRow:
    check: str
    case: int
    params: str
    value: float
    tolerance: float
    passed: bool


def _random_law(rng) -> SceneryDistribution:
    return SceneryDistribution(float(rng.uniform(1.0, 3.0)), float(rng.uniform(0.5, 2.0)))


def verify_suite(seed: int, pairs: int = 50, monotone_pairs: int = 20, replicas: int = 10**5,
                 spacing: float = 2.0**-6, tol: float = 1e-9) -> list[SuiteRow]:
    """Convolution closure, coefficient monotonicity and the symmetric-sum identity.

    Laws, scales and coefficient vectors are drawn from ``seed``.
    """
    rng = chunk_generator(seed, TAG_WEIGHTED, 1)
    rows = []
    for i in range(pairs):
        p, q = _random_law(rng), _random_law(rng)
        sp, sq = rng.uniform(0.5, 2.0, size=2)
        f = GridDensity.from_distribution(p, spacing, scale=float(sp))
        g = GridDensity.from_distribution(q, spacing, scale=float(sq))
        rep = is_bell_shaped(convolve(f, g), tol)
        params = (f"alpha=({p.alpha:.4f},{q.alpha:.4f}) c=({p.c_alpha:.4f},{q.c_alpha:.4f}) "
                  f"scale=({sp:.4f},{sq:.4f})")
        rows.append(SuiteRow("convolution-closure", i, params, rep.excess, tol, rep.ok))
    for i in range(monotone_pairs):
        dist = _random_law(rng)
        L = int(rng.integers(1, 9))
        small = rng.uniform(0.1, 1.0, size=L)
        large = small * (1.0 + rng.uniform(0.0, 1.0, size=L))
        y = float(rng.uniform(0.5, 3.0))
        chk = coefficient_monotonicity(small, large, dist, y, replicas, seed + i)
        params = f"alpha={dist.alpha:.4f} c={dist.c_alpha:.4f} L={L} y={y:.4f}"
        rows.append(SuiteRow("coefficient-monotonicity", i, params, chk.p_small - chk.p_large,
                             2.0 * chk.diff_std_error, not chk.violated))
    cases = [(SceneryDistribution(2.0), 1.0)] + [(SceneryDistribution(1.5), y) for y in (0.5, 1.0, 2.0)]
    for i, (dist, y) in enumerate(cases):
        f = GridDensity.from_distribution(dist, 2.0**-8)
        r = symmetric_sum_identity_check(f, f, y)
        rows.append(SuiteRow("sum-identity", i, f"alpha={dist.alpha} y={y}", r, 1e-5, r < 1e-5))
    return rows
