"""Symmetric exponential-power scenery, density proportional to exp(-c |t|^alpha).

|eta| is drawn as (G / c)^(1/alpha) with G ~ Gamma(1/alpha, 1) and an
independent sign.  alpha = 1 is the Laplace law, alpha = 2 a centred Gaussian
of variance 1 / (2c).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import erfcinv, gammaincc, gammainccinv, gammaln

from .streams import chunk_generator, site_uniforms

TAG_SAMPLE = 11

# law codes understood by the compiled kernels
LAW_GENERIC, LAW_LAPLACE, LAW_GAUSS = 0, 1, 2


class DivergentMGF(ValueError):
    pass


@dataclass(frozen=True)
class SceneryDistribution:
    alpha: float
    c_alpha: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 1.0):
            raise ValueError(f"tail exponent must be >= 1, got {self.alpha}")
        if not (math.isfinite(self.c_alpha) and self.c_alpha > 0.0):
            raise ValueError(f"tail constant must be > 0, got {self.c_alpha}")

    @property
    def a(self) -> float:
        return self.alpha / (self.alpha + 1.0)

    @property
    def b(self) -> float:
        return 1.0 / (self.alpha + 1.0)

    @property
    def alpha_bar(self) -> float:
        """Dual exponent, 1/alpha + 1/alpha_bar = 1 (inf for alpha = 1)."""
        return math.inf if self.alpha == 1.0 else self.alpha / (self.alpha - 1.0)

    @property
    def law(self) -> int:
        if self.alpha == 1.0:
            return LAW_LAPLACE
        if self.alpha == 2.0:
            return LAW_GAUSS
        return LAW_GENERIC

    @property
    def log_normalizer(self) -> float:
        """log Z with Z = 2 Gamma(1 + 1/alpha) / c^(1/alpha)."""
        return math.log(2.0) + gammaln(1.0 + 1.0 / self.alpha) - math.log(self.c_alpha) / self.alpha

    def log_density(self, t):
        return -self.c_alpha * np.abs(t) ** self.alpha - self.log_normalizer

    def density(self, t):
        return np.exp(self.log_density(t))

    @property
    def second_moment(self) -> float:
        """E[eta^2] = Gamma(3/alpha) / (Gamma(1/alpha) c^(2/alpha))."""
        a = self.alpha
        return math.exp(gammaln(3.0 / a) - gammaln(1.0 / a) - 2.0 * math.log(self.c_alpha) / a)

    def from_gamma(self, g: np.ndarray, negative: np.ndarray) -> np.ndarray:
        mag = (np.asarray(g, dtype=float) / self.c_alpha) ** (1.0 / self.alpha)
        return np.where(negative, -mag, mag)


def sample(dist: SceneryDistribution, count: int, seed: int) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = chunk_generator(seed, TAG_SAMPLE, 0)
    g = rng.gamma(1.0 / dist.alpha, 1.0, size=count)
    negative = rng.random(count) < 0.5
    return dist.from_gamma(g, negative)


# ---------------------------------------------------------------------------
# tail, log-MGF and moments
# ---------------------------------------------------------------------------

def _log_upper_gamma_reg(s: float, x: float) -> float:
    q = gammaincc(s, x)
    if q > 1e-280:
        return math.log(q)
    return float(mpmath.log(mpmath.gammainc(s, x, mpmath.inf, regularized=True)))


def log_tail(dist: SceneryDistribution, t: float) -> float:
    """log P(eta > t), exact (regularised upper incomplete gamma)."""
    t = float(t)
    if not t > 0.0:
        raise ValueError(f"log_tail needs t > 0, got {t}")
    x = dist.c_alpha * t**dist.alpha
    return _log_upper_gamma_reg(1.0 / dist.alpha, x) - math.log(2.0)


def _check_mgf(dist: SceneryDistribution, lam: float):
    if dist.alpha == 1.0 and abs(lam) >= dist.c_alpha:
        raise DivergentMGF(f"MGF diverges for |lambda| >= c = {dist.c_alpha} when alpha = 1")


def _peak(dist: SceneryDistribution, lam: float) -> tuple[float, float, float]:
    """Maximiser t*, value phi(t*) and a width scale of phi(t) = lam t - c t^alpha on t >= 0."""
    a, c = dist.alpha, dist.c_alpha
    if a == 1.0 or lam == 0.0:
        tstar = 0.0
    else:
        log_t = math.log(lam / (c * a)) / (a - 1.0)
        if log_t > 700.0:
            raise ValueError(f"Lambda({lam}) is out of double range for alpha = {a}")
        tstar = math.exp(log_t)
    phi = lam * tstar - c * tstar**a
    width = (1.0 / c) ** (1.0 / a)
    if tstar > 0.0 and a != 1.0:
        # 1 / sqrt(phi''(t*)), in logs so far peaks do not underflow
        curv_width = math.exp(-0.5 * (math.log(c * a * (a - 1.0)) + (a - 2.0) * math.log(tstar)))
        # a flat peak near 0 (tiny lam, alpha > 2) keeps the natural scale
        width = min(max(width, tstar), curv_width)
    return tstar, phi, width


def _unresolved(tstar: float, width: float) -> bool:
    """True when the peak is too narrow relative to t* for quadrature in doubles."""
    return tstar > 0.0 and width < 1e-9 * tstar


def _excess(t: float, lam: float, tstar: float, phi: float, a: float, c: float) -> float:
    """lam t - c t^alpha - phi(t*), which is <= 0 for t >= 0.

    Around a far peak the direct difference loses every digit, so it is
    written as -c t*^alpha g(u) with u = t / t* - 1 and
    g(u) = (1 + u)^alpha - 1 - alpha u, summed as a binomial series for |u| < 0.01.
    """
    u = (t - tstar) / tstar if tstar > 0.0 else math.inf
    if abs(u) >= 1e-2:
        return min(lam * t - c * t**a - phi, 0.0)
    g, binom = 0.0, a
    for k in range(2, 9):
        binom *= (a - k + 1) / k
        g += binom * u**k
    return -c * tstar**a * max(g, 0.0)


def _log_integral(dist: SceneryDistribution, lam: float, power: int = 0, absolute_tilt: bool = False) -> float:
    """log of integral over R of |t|^power exp(lam t - c |t|^alpha), lam >= 0.

    With ``absolute_tilt`` the tilt is lam |t| instead of lam t.
    """
    a, c = dist.alpha, dist.c_alpha
    tstar, phi, width = _peak(dist, lam)
    shift = phi
    if _unresolved(tstar, width):
        # Laplace's method; the relative error is O(1 / Lambda)
        return phi + 0.5 * math.log(2.0 * math.pi) + math.log(width) + power * math.log(tstar)

    def pos(t):
        return t**power * math.exp(_excess(t, lam, tstar, shift, a, c))

    def neg(s):
        return s**power * math.exp(min(-lam * s - c * s**a - shift, 0.0))

    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)
    with warnings.catch_warnings():
        # roundoff notices at this tolerance are harmless
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        right, left = _two_sided(pos, neg, tstar, width, a, c, opts, absolute_tilt)
    return shift + math.log(right + left)


def _two_sided(pos, neg, tstar, width, a, c, opts, absolute_tilt):
    lo = max(0.0, tstar - 30.0 * width)
    hi = tstar + 30.0 * width
    right = 0.0
    for u, v in ((0.0, lo), (lo, tstar), (tstar, hi)):
        if v > u:
            right += integrate.quad(pos, u, v, **opts)[0]
    right += integrate.quad(pos, hi, math.inf, **opts)[0]
    other = pos if absolute_tilt else neg
    if absolute_tilt:
        left = right
    else:
        w0 = (1.0 / c) ** (1.0 / a)
        left = integrate.quad(other, 0.0, 30.0 * w0, **opts)[0]
        left += integrate.quad(other, 30.0 * w0, math.inf, **opts)[0]
    return right, left


def log_mgf(dist: SceneryDistribution, lam: float) -> float:
    """Lambda(lam) = log E[exp(lam eta)] by adaptive quadrature."""
    lam = abs(float(lam))
    _check_mgf(dist, lam)
    if lam == 0.0:
        return 0.0
    return _log_integral(dist, lam) - dist.log_normalizer


def log_mgf_derivative(dist: SceneryDistribution, lam: float) -> float:
    """Lambda'(lam) = E_lam[eta] under the tilted law."""
    lam = float(lam)
    _check_mgf(dist, lam)
    if lam == 0.0:
        return 0.0
    s = 1.0 if lam > 0 else -1.0
    lam = abs(lam)
    # E[eta e^{lam eta}] splits into positive and negative halves
    a, c = dist.alpha, dist.c_alpha
    tstar, phi, width = _peak(dist, lam)
    if _unresolved(tstar, width):
        # tilted law concentrated at t*; mean shift is O(t* / Lambda)
        return s * tstar
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=200)

    def odd(t):
        return t * (math.exp(_excess(t, lam, tstar, phi, a, c)) - math.exp(-lam * t - c * t**a - phi))

    def even(t):
        return math.exp(_excess(t, lam, tstar, phi, a, c)) + math.exp(-lam * t - c * t**a - phi)

    hi = tstar + 30.0 * width
    pts = [0.0, max(0.0, tstar - 30.0 * width), tstar, hi]
    num = den = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for u, v in zip(pts[:-1], pts[1:]):
            if v > u:
                num += integrate.quad(odd, u, v, **opts)[0]
                den += integrate.quad(even, u, v, **opts)[0]
        num += integrate.quad(odd, hi, math.inf, **opts)[0]
        den += integrate.quad(even, hi, math.inf, **opts)[0]
    return s * num / den


def closed_form_log_mgf(dist: SceneryDistribution, theta):
    """Lambda for the Laplace and Gaussian members, None otherwise."""
    theta = np.asarray(theta, dtype=float)
    c = dist.c_alpha
    if dist.law == LAW_LAPLACE:
        if np.any(np.abs(theta) >= c):
            raise DivergentMGF("MGF diverges for |lambda| >= c when alpha = 1")
        return -np.log1p(-(theta / c) ** 2)
    if dist.law == LAW_GAUSS:
        return theta**2 / (4.0 * c)
    return None


def closed_form_log_mgf_derivative(dist: SceneryDistribution, theta):
    theta = np.asarray(theta, dtype=float)
    c = dist.c_alpha
    if dist.law == LAW_LAPLACE:
        return 2.0 * theta / (c * c - theta**2)
    if dist.law == LAW_GAUSS:
        return theta / (2.0 * c)
    return None


@lru_cache(maxsize=200_000)
def _cached_log_mgf(alpha: float, c: float, lam: float) -> float:
    return log_mgf(SceneryDistribution(alpha, c), lam)


@lru_cache(maxsize=200_000)
def _cached_log_mgf_derivative(alpha: float, c: float, lam: float) -> float:
    return log_mgf_derivative(SceneryDistribution(alpha, c), lam)


def log_mgf_values(dist: SceneryDistribution, theta) -> np.ndarray:
    """Vectorised Lambda, closed form when available, else cached quadrature."""
    out = closed_form_log_mgf(dist, theta)
    if out is not None:
        return out
    theta = np.asarray(theta, dtype=float)
    flat = [_cached_log_mgf(dist.alpha, dist.c_alpha, float(v)) for v in theta.ravel()]
    return np.array(flat).reshape(theta.shape)


def log_mgf_derivative_values(dist: SceneryDistribution, theta) -> np.ndarray:
    out = closed_form_log_mgf_derivative(dist, theta)
    if out is not None:
        return out
    theta = np.asarray(theta, dtype=float)
    flat = [_cached_log_mgf_derivative(dist.alpha, dist.c_alpha, float(v)) for v in theta.ravel()]
    return np.array(flat).reshape(theta.shape)


def kasahara_asymptote(dist: SceneryDistribution, x: float) -> float:
    """x^ab / (ab (alpha c)^(ab - 1)) with ab the dual exponent."""
    if dist.alpha == 1.0:
        raise ValueError("the asymptote needs alpha > 1")
    if not x > 0:
        raise ValueError("x must be > 0")
    ab = dist.alpha_bar
    return x**ab / (ab * (dist.alpha * dist.c_alpha) ** (ab - 1.0))


def moment_nu(dist: SceneryDistribution, delta: float) -> float:
    """nu(delta) = E[eta^2 exp(delta |eta|)]."""
    delta = float(delta)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if dist.alpha == 1.0 and delta >= dist.c_alpha:
        raise DivergentMGF("nu(delta) diverges for delta >= c when alpha = 1")
    return math.exp(_log_integral(dist, delta, power=2, absolute_tilt=True) - dist.log_normalizer)


# ---------------------------------------------------------------------------
# exponentially tilted draws, density proportional to exp(theta t - c |t|^alpha)
# ---------------------------------------------------------------------------

def _tilted_envelope(dist: SceneryDistribution, theta: float):
    """Mode, log-density at the mode and the two unit-drop points of the
    concave log-density h(t) = theta t - c |t|^alpha."""
    a, c = dist.alpha, dist.c_alpha

    def h(t):
        return theta * t - c * abs(t) ** a

    if a == 1.0:
        m = 0.0
    else:
        m = math.copysign((abs(theta) / (c * a)) ** (1.0 / (a - 1.0)), theta) if theta else 0.0
    hm = h(m)

    def drop(direction):
        step = (1.0 / c) ** (1.0 / a)
        far = m + direction * step
        while h(far) > hm - 1.0:
            step *= 2.0
            far = m + direction * step
        near = m
        for _ in range(200):
            mid = 0.5 * (near + far)
            if h(mid) > hm - 1.0:
                near = mid
            else:
                far = mid
        return far

    return m, hm, drop(-1.0), drop(1.0), h


def tilted_sample(dist: SceneryDistribution, theta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the tilted law by rejection from a flat-top envelope
    with exponential tails (valid because the log-density is concave)."""
    a, c = dist.alpha, dist.c_alpha
    if dist.law == LAW_LAPLACE:
        _check_mgf(dist, theta)
        return rng.exponential(1.0 / (c - theta), count) - rng.exponential(1.0 / (c + theta), count)
    if dist.law == LAW_GAUSS:
        return rng.normal(theta / (2.0 * c), math.sqrt(1.0 / (2.0 * c)), count)
    m, hm, left, right, h = _tilted_envelope(dist, theta)

    def slope(t):
        return theta - c * a * abs(t) ** (a - 1.0) * math.copysign(1.0, t)

    sl, sr = slope(left), slope(right)  # sl > 0 > sr
    hl, hr = h(left), h(right)
    w_mid = right - left
    w_left = math.exp(hl - hm) / sl
    w_right = math.exp(hr - hm) / (-sr)
    total = w_mid + w_left + w_right
    out = np.empty(count)
    filled = 0
    while filled < count:
        k = max(16, int(1.3 * (count - filled)))
        u = rng.random(k) * total
        e = rng.standard_exponential(k)
        t = np.where(u < w_mid, left + (right - left) * rng.random(k), 0.0)
        env = np.zeros(k)
        mid = u < w_mid
        env[mid] = hm
        lt = (~mid) & (u < w_mid + w_left)
        t[lt] = left - e[lt] / sl
        env[lt] = hl + sl * (t[lt] - left)
        rt = ~(mid | lt)
        t[rt] = right + e[rt] / (-sr)
        env[rt] = hr + sr * (t[rt] - right)
        logacc = theta * t - c * np.abs(t) ** a - env
        keep = np.log(rng.random(k)) <= logacc
        acc = t[keep][: count - filled]
        out[filled : filled + acc.size] = acc
        filled += acc.size
    return out


# ---------------------------------------------------------------------------
# lazily materialised scenery
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SceneryField:
    """Scenery values keyed by site.

    A site's value is a pure function of ``(seed, site)`` and is cached on first
    access.  ``assigned`` fixes values by hand; unassigned sites of a field
    without a distribution read as ``default``.
    """

    dist: SceneryDistribution | None = None
    seed: int = 0
    assigned: dict = field(default_factory=dict)
    default: float = 0.0
    scale: float = 1.0
    replica: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def fixed(cls, values: dict, default: float = 0.0) -> "SceneryField":
        return cls(None, 0, {_key(k): float(v) for k, v in values.items()}, default)

    def scaled(self, factor: float) -> "SceneryField":
        return SceneryField(self.dist, self.seed, dict(self.assigned), self.default,
                            self.scale * factor, self.replica)

    def values(self, sites) -> np.ndarray:
        sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
        if self.dist is not None and not self.assigned:
            # values are a pure function of (seed, replica, site)
            return self._draw(sites) * self.scale
        keys = [tuple(s) for s in sites.tolist()]
        out = np.empty(len(keys))
        missing = []
        for i, k in enumerate(keys):
            if k in self.assigned:
                out[i] = self.assigned[k]
            elif k in self._cache:
                out[i] = self._cache[k]
            elif self.dist is None:
                out[i] = self.default
            else:
                missing.append(i)
        if missing:
            fresh = self._draw(sites[missing])
            out[missing] = fresh
            for i, v in zip(missing, fresh):
                self._cache[keys[i]] = v
        return out * self.scale

    def __getitem__(self, site) -> float:
        return float(self.values([_key(site)])[0])

    def _draw(self, sites: np.ndarray) -> np.ndarray:
        u = site_uniforms(self.seed, sites, stream=2 * self.replica)
        v = site_uniforms(self.seed, sites, stream=2 * self.replica + 1)
        g = _inverse_upper_gamma(1.0 / self.dist.alpha, u)
        return self.dist.from_gamma(g, v < 0.5)


def _inverse_upper_gamma(shape: float, u: np.ndarray) -> np.ndarray:
    """g with Q(shape, g) = u; closed forms for shapes 1 and 1/2."""
    if shape == 1.0:
        return -np.log(u)
    if shape == 0.5:
        return erfcinv(u) ** 2
    return gammainccinv(shape, u)


def _key(site) -> tuple[int, ...]:
    return tuple(int(v) for v in np.atleast_1d(site))
