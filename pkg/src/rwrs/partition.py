"""Level sets of the local time used to split the event {X_n > n y}.

Sites of the range are sorted by l_n(x) into

* down:     l < z n^b
* level 0:  z n^b <= l < y^a n^b
* level i:  y^a n^(b_i) <= l < y^a n^(b_(i+1)),  i = 1..N
* up:       l >= (y n)^a

and the budget y is split as y_down + y_0 + .. + y_N + y_up.  Whenever
X_n > n y, one class sum exceeds its share or the up class is nonempty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .estimates import TailEstimate
from .process import RwrsSample
from .scenery import SceneryDistribution, moment_nu
from .walk import WalkConfig, LocalTimeField, local_time_histograms

DOWN, UP = "down", "up"
TAG_DUP = 41


class RegimeViolation(ValueError):
    pass


class NoAdmissibleN(ValueError):
    pass


@dataclass(frozen=True)
class PartitionScheme:
    alpha: float
    d: int
    n: float
    y: float
    delta0: float
    eps0: float
    chi: float
    beta: float
    N: int
    b_list: tuple  # b_1 .. b_(N+1)
    z_list: tuple  # z_1 .. z_N
    y_list: tuple  # y_0 .. y_N
    y_down: float
    y_up: float
    z_threshold: float
    gamma_list: tuple  # gamma_0 .. gamma_N
    chi_range: tuple = (0.5, 2.0)

    @property
    def a(self) -> float:
        return self.alpha / (self.alpha + 1.0)

    @property
    def b(self) -> float:
        return 1.0 / (self.alpha + 1.0)

    # thresholds on the local time
    @property
    def down_limit(self) -> float:
        return self.z_threshold * self.n**self.b

    @property
    def level0_limit(self) -> float:
        return self.y**self.a * self.n**self.b

    @property
    def up_limit(self) -> float:
        return (self.y * self.n) ** self.a

    def level_limits(self) -> np.ndarray:
        """Lower edges y^a n^(b_i) for i = 1..N+1 (the last one is the up limit)."""
        return np.array([self.y**self.a * self.n**bi for bi in self.b_list])

    def requirement_exponents(self) -> list[float]:
        """(a - b_(i+1)) - (1 - delta0)(a - b_i) for i = 0..N, with
        b_0 := a - (1 + eps0)(a - b) extending the geometric gaps."""
        a = self.a
        b0 = a - (1.0 + self.eps0) * (a - self.b)
        bs = (b0,) + tuple(self.b_list)
        return [(a - bs[i + 1]) - (1.0 - self.delta0) * (a - bs[i]) for i in range(self.N + 1)]

    def invariant_residuals(self) -> dict[str, float]:
        """Absolute deviations of the defining identities; all ~ 0 on success."""
        a, b, N = self.a, self.b, self.N
        res = {"budget": abs(math.fsum(self.y_list) + self.y_down + self.y_up - self.y) / self.y}
        if N == 0:
            return res
        res["gap_sum"] = abs(math.fsum(self.z_list) - (a - b))
        res["z2"] = abs(self.z_list[1] - self.eps0 * self.z_list[0]) if N >= 2 else 0.0
        res["z_ratio"] = max((abs(self.z_list[i] - (1.0 + self.eps0) * self.z_list[i - 1])
                              for i in range(2, N)), default=0.0)
        res["chi"] = abs(self.z_list[0] * math.log(self.n) - self.chi)
        res["b_ends"] = max(abs(self.b_list[0] - b), abs(self.b_list[-1] - a))
        req = []
        for i, e in enumerate(self.requirement_exponents()):
            rhs = self.y_list[i] * self.n**e
            req.append(max(0.0, self.beta * self.y - rhs) / (self.beta * self.y))
        res["requirement"] = max(req)
        return res

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(t)) for t in v)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PartitionScheme":
        raw = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                raw[k.strip()] = v.strip()
        kw = {}
        for f in fields(cls):
            v = raw[f.name]
            if f.name in ("N", "d"):
                kw[f.name] = int(v)
            elif f.name.endswith("_list") or f.name == "chi_range":
                kw[f.name] = tuple(float(t) for t in v.split(",")) if v else ()
            else:
                kw[f.name] = float(v)
        return cls(**kw)


def regime_delta(alpha: float, d: int) -> float:
    return (1.0 / alpha - 2.0 / d) / (1.0 - 2.0 / d)


def build_scheme(alpha: float, d: int, n: float, y: float, z_threshold: float = 0.1,
                 chi_range: tuple[float, float] = (0.5, 2.0)) -> PartitionScheme:
    if d < 3:
        raise RegimeViolation(f"requires d >= 3, got d = {d}")
    if not (1.0 <= alpha < d / 2.0):
        raise RegimeViolation(f"regime violation: requires 1 <= alpha < d/2, got alpha = {alpha}, d = {d}")
    if n < 2 or not y > 0:
        raise ValueError("need n >= 2 and y > 0")
    a, b = alpha / (alpha + 1.0), 1.0 / (alpha + 1.0)
    if not 0 < z_threshold < y**a:
        raise ValueError("z_threshold must lie in (0, y^a) so that level 0 is a proper interval")
    delta0 = regime_delta(alpha, d)
    eps0 = (delta0 / 2.0) / (1.0 - delta0 / 2.0)
    third = y / 3.0
    if alpha == 1.0:
        # a = b: only down, level 0 and up remain
        return PartitionScheme(alpha, d, float(n), float(y), delta0, eps0, math.nan, 1.0 / 3.0, 0,
                               (a,), (), (third,), third, third, z_threshold, (0.0,), tuple(chi_range))
    lo, hi = chi_range
    total = (a - b) * math.log(n)
    N = 1
    while total / (1.0 + eps0) ** (N - 1) > hi:
        N += 1
    chi = total / (1.0 + eps0) ** (N - 1)
    if chi < lo:
        raise NoAdmissibleN(f"no N puts chi in [{lo}, {hi}] (chi = {chi:.4g} at N = {N})")
    logn = math.log(n)
    z = [chi / logn]
    if N >= 2:
        z.append(eps0 * z[0])
    for _ in range(3, N + 1):
        z.append((1.0 + eps0) * z[-1])
    # b_(N+1) = a, b_(N+1-j) = a - (z_1 + .. + z_j)
    b_list = [a] * (N + 1)
    for j in range(1, N + 1):
        b_list[N - j] = a - math.fsum(z[:j])
    b_list[0] = b
    shape = [math.exp(-chi * eps0 * (1.0 + eps0) ** (N - i - 1)) for i in range(N)]
    shape.append(math.exp(chi * (1.0 - delta0)))
    beta = third / (y * math.fsum(shape))
    y_list = [beta * y * s for s in shape]
    gam = [(a - bi) / (1.0 - 2.0 / d) for bi in b_list[:N]]
    gamma_list = [gam[0]] + gam  # gamma_0 taken equal to gamma_1
    scheme = PartitionScheme(alpha, d, float(n), float(y), delta0, eps0, chi, beta, N,
                             tuple(b_list), tuple(z), tuple(y_list), third, third, z_threshold,
                             tuple(gamma_list), tuple(chi_range))
    bad = {k: v for k, v in scheme.invariant_residuals().items() if v > 1e-12}
    if bad:
        raise AssertionError(f"partition invariants failed: {bad}")
    return scheme


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RangeClassification:
    """Class of every range site: -1 down, 0..N levels, N + 1 up."""

    labels: np.ndarray
    terms: np.ndarray  # l(x) eta(x) per site, zeros when no scenery was given
    N: int
    sums: dict = field(default_factory=dict)

    def name(self, label: int) -> str:
        return _name(label, self.N)

    def reconstruct(self) -> float:
        """Sum of the class sums, compensated so it equals the direct sum exactly."""
        order = np.argsort(self.labels, kind="stable")
        return math.fsum(self.terms[order].tolist())


def classify_counts(counts: np.ndarray, scheme: PartitionScheme) -> np.ndarray:
    counts = np.asarray(counts)
    labels = np.empty(counts.shape, np.int64)
    edges = scheme.level_limits()
    # level i for y^a n^(b_i) <= l < y^a n^(b_(i+1))
    lvl = np.searchsorted(edges, counts, side="right")
    labels[:] = lvl
    labels[counts < scheme.level0_limit] = 0
    labels[counts >= scheme.up_limit] = scheme.N + 1
    labels[counts < scheme.down_limit] = -1
    return labels


def classify(lt: LocalTimeField, scheme: PartitionScheme, scenery_values=None) -> RangeClassification:
    labels = classify_counts(lt.counts, scheme)
    if scenery_values is None:
        terms = np.zeros(lt.counts.size)
    else:
        terms = lt.counts * np.asarray(scenery_values, dtype=float)
    sums = {}
    for lab in range(-1, scheme.N + 2):
        sel = labels == lab
        sums[_name(lab, scheme.N)] = math.fsum(terms[sel].tolist())
    return RangeClassification(labels, terms, scheme.N, sums)


def _name(label: int, N: int) -> str:
    return DOWN if label < 0 else UP if label > N else f"level-{label}"


@dataclass(frozen=True)
class DecompositionReport:
    x_n: float
    threshold: float
    vacuous: bool
    fired: tuple
    violated: bool


def event_decomposition_check(sample: RwrsSample, scheme: PartitionScheme) -> DecompositionReport:
    n, y = scheme.n, scheme.y
    cls = classify(sample.local_times, scheme, sample.scenery_values)
    if not sample.x_n > n * y:
        return DecompositionReport(sample.x_n, n * y, True, (), False)
    fired = []
    for i, yi in enumerate(scheme.y_list):
        if cls.sums[f"level-{i}"] > n * yi:
            fired.append(f"level-{i}")
    if cls.sums[DOWN] > n * scheme.y_down:
        fired.append(DOWN)
    if np.any(cls.labels == scheme.N + 1):
        fired.append(UP)
    return DecompositionReport(sample.x_n, n * y, False, tuple(fired), not fired)


# ---------------------------------------------------------------------------
# the two extreme classes
# ---------------------------------------------------------------------------

def up_envelope(n: float, y: float, a: float, kappa: float) -> float:
    """n exp(-kappa (y n)^a)."""
    return n * math.exp(-kappa * (y * n) ** a)


def d_up_probability(config: WalkConfig, scheme: PartitionScheme, replicas: int, seed: int,
                     workers: int | None = None) -> TailEstimate:
    """Frequency of some site reaching (y n)^a visits by time n."""
    n = int(scheme.n)
    limit = scheme.up_limit
    if limit > n + 1:
        return TailEstimate(-math.inf, 0.0, replicas, "naive", seed, hits=0,
                            effective_replicas=float(replicas), extra={"exact": True})
    batch = local_time_histograms(config, n, replicas, seed, workers)
    hits = int(np.count_nonzero(batch.max_local_time >= limit))
    return TailEstimate.from_hits(hits, replicas, seed, "naive", up_limit=limit)


@dataclass(frozen=True)
class UpEnvelope:
    """Prefactors C_n = P(up class nonempty) / (n exp(-kappa (y n)^a))."""

    n: tuple
    estimates: tuple
    kappa: float
    prefactors: np.ndarray

    @property
    def spread(self) -> float:
        return float(self.prefactors.max() / self.prefactors.min())


def up_envelope_fit(config: WalkConfig, alpha: float, y: float, n_values, replicas: int,
                    seed: int, kappa: float, workers: int | None = None) -> UpEnvelope:
    """``kappa`` is an estimate of -log P(return to the origin)."""
    ests = []
    for n in n_values:
        scheme = build_scheme(alpha, config.d, n, y)
        ests.append(d_up_probability(config, scheme, replicas, seed, workers))
    a = alpha / (alpha + 1.0)
    pref = np.array([e.probability / up_envelope(n, y, a, kappa) for n, e in zip(n_values, ests)])
    return UpEnvelope(tuple(int(n) for n in n_values), tuple(ests), float(kappa), pref)


@dataclass(frozen=True)
class DownBound:
    log_bound: float
    lam: float
    delta: float
    nu: float


def d_down_chebyshev(lt: LocalTimeField | None, dist: SceneryDistribution, scheme: PartitionScheme,
                     lambda_grid) -> DownBound:
    """-(n^(1-b) / z) sup_{0 <= lam <= delta} (y_down lam - nu(delta) lam^2 / 2), delta = max grid."""
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or grid.min() < 0:
        raise ValueError("lambda grid must be nonempty and nonnegative")
    delta = float(grid.max())
    nu = moment_nu(dist, delta)
    if lt is not None:
        sel = lt.counts < scheme.down_limit
        sq = float(np.dot(lt.counts[sel], lt.counts[sel]))
        if sq > scheme.z_threshold * scheme.n ** (1.0 + scheme.b) * (1 + 1e-12):
            raise AssertionError("down-class self-intersection exceeds z n^(1+b)")
    vals = scheme.y_down * grid - nu * grid**2 / 2.0
    j = int(np.argmax(vals))
    sup = max(float(vals[j]), 0.0)
    lam = float(grid[j]) if vals[j] > 0 else 0.0
    return DownBound(-(scheme.n ** (1.0 - scheme.b) / scheme.z_threshold) * sup, lam, delta, nu)
