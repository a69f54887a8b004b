import math

import mpmath
import numpy as np
import pytest
from hypothesis import example, given, strategies as st
from scipy import integrate, stats

from rwrs.scenery import (
    DivergentMGF,
    SceneryDistribution,
    SceneryField,
    closed_form_log_mgf,
    kasahara_asymptote,
    log_mgf,
    log_mgf_derivative,
    log_tail,
    moment_nu,
    sample,
    tilted_sample,
)

alphas = st.floats(1.0, 4.0)
consts = st.floats(0.3, 3.0)


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        SceneryDistribution(0.5)
    with pytest.raises(ValueError):
        SceneryDistribution(2.0, 0.0)
    with pytest.raises(ValueError):
        log_tail(SceneryDistribution(2.0), 0.0)


@given(alphas, consts)
def test_density_integrates_to_one(a, c):
    dist = SceneryDistribution(a, c)
    total, _ = integrate.quad(dist.density, -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)


@given(alphas, consts, st.floats(0.05, 4.0))
def test_tail_matches_quadrature(a, c, t):
    dist = SceneryDistribution(a, c)
    ref, _ = integrate.quad(dist.density, t, np.inf, epsabs=0, epsrel=1e-11)
    assert log_tail(dist, t) == pytest.approx(math.log(ref), abs=1e-7)


def test_tail_closed_forms():
    # Laplace: P(eta > t) = exp(-t) / 2
    assert log_tail(SceneryDistribution(1.0), 5.0) == pytest.approx(-5.0 - math.log(2), abs=1e-14)
    # alpha = 2, c = 1 is N(0, 1/2)
    g = SceneryDistribution(2.0)
    assert log_tail(g, 1.3) == pytest.approx(stats.norm.logsf(1.3 * math.sqrt(2)), abs=1e-12)
    # deep tail stays finite through the mpmath fallback
    assert log_tail(g, 40.0) == pytest.approx(stats.norm.logsf(40 * math.sqrt(2)), rel=1e-9)


@given(alphas, consts, st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_tail_decreasing(a, c, s, t):
    dist = SceneryDistribution(a, c)
    if s < t:
        assert log_tail(dist, s) >= log_tail(dist, t)


def test_second_moment_formula():
    assert SceneryDistribution(2.0).second_moment == pytest.approx(0.5)
    assert SceneryDistribution(1.0).second_moment == pytest.approx(2.0)
    d = SceneryDistribution(1.5, 0.7)
    ref, _ = integrate.quad(lambda t: t * t * d.density(t), -np.inf, np.inf)
    assert d.second_moment == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("alpha,c", [(1.0, 1.0), (1.5, 1.0), (2.0, 0.5), (3.0, 2.0)])
def test_sampler_moments(alpha, c):
    dist = SceneryDistribution(alpha, c)
    x = sample(dist, 200000, 3)
    m2 = dist.second_moment
    assert abs(x.mean()) < 4 * math.sqrt(m2 / x.size)
    se = x.var() * math.sqrt(2.0 / x.size) * 3
    assert abs((x * x).mean() - m2) < 4 * se
    # c |eta|^alpha is Gamma(1/alpha) distributed
    g = c * np.abs(x) ** alpha
    assert stats.kstest(g, stats.gamma(1 / alpha).cdf).pvalue > 1e-3


def test_log_mgf_closed_forms():
    g = SceneryDistribution(2.0)
    for lam in (0.5, 1.0, 2.0, 5.0):
        assert log_mgf(g, lam) == pytest.approx(lam * lam / 4, abs=1e-10)
    lap = SceneryDistribution(1.0)
    for lam in (0.1, 0.5, 0.9):
        assert log_mgf(lap, lam) == pytest.approx(-math.log(1 - lam * lam), abs=1e-10)
        assert log_mgf_derivative(lap, lam) == pytest.approx(2 * lam / (1 - lam * lam), rel=1e-8)
    assert np.allclose(closed_form_log_mgf(lap, np.array([0.2, 0.7])),
                       -np.log(1 - np.array([0.2, 0.7]) ** 2))
    with pytest.raises(DivergentMGF):
        log_mgf(lap, 1.0)


@given(st.floats(1.05, 3.5), st.floats(0.01, 6.0))
@example(1.05078125, 3.0)
@example(4.0 - 1e-9, 1e-200)
def test_log_mgf_matches_quadrature(a, lam):
    dist = SceneryDistribution(a)
    # independent oracle: arbitrary-precision quadrature on the whole line
    mpmath.mp.dps = 30
    f = lambda t: mpmath.exp(lam * t - abs(t) ** a)
    peak = (lam / a) ** (1 / (a - 1))
    ref = mpmath.quad(f, [-mpmath.inf, 0, peak, 4 * peak + 10, mpmath.inf])
    expected = float(mpmath.log(ref)) - dist.log_normalizer
    assert log_mgf(dist, lam) == pytest.approx(expected, rel=1e-10, abs=1e-7)


@given(alphas, st.floats(0.0, 0.9))
@example(4.0, 1e-280)
def test_log_mgf_even_and_convex(a, lam):
    dist = SceneryDistribution(a)
    assert log_mgf(dist, lam) == pytest.approx(log_mgf(dist, -lam), abs=1e-10)
    h = 0.05
    mid = log_mgf(dist, lam)
    assert log_mgf(dist, lam + h) + log_mgf(dist, max(lam - h, -0.9)) >= 2 * mid - 1e-9 or lam < h


def test_kasahara_ratio_near_one():
    dist = SceneryDistribution(1.5)
    assert 0.9 <= log_mgf(dist, 30.0) / kasahara_asymptote(dist, 30.0) <= 1.1
    with pytest.raises(ValueError):
        kasahara_asymptote(SceneryDistribution(1.0), 2.0)
    # Gaussian: Lambda(x) = x^2 / 4 is also the asymptote
    assert kasahara_asymptote(SceneryDistribution(2.0), 3.0) == pytest.approx(9 / 4)


def test_moment_nu_laplace():
    # E[eta^2 exp(delta |eta|)] = 2 / (1 - delta)^3 for the c = 1 Laplace law
    lap = SceneryDistribution(1.0)
    for delta in (0.0, 0.25, 0.5):
        assert moment_nu(lap, delta) == pytest.approx(2 / (1 - delta) ** 3, rel=1e-8)
    with pytest.raises(DivergentMGF):
        moment_nu(lap, 1.0)


@pytest.mark.parametrize("alpha,theta", [(1.0, 0.6), (1.5, 2.0), (2.0, 3.0), (3.0, -1.5)])
def test_tilted_sample_mean_is_log_mgf_derivative(alpha, theta):
    dist = SceneryDistribution(alpha)
    x = tilted_sample(dist, theta, 100000, np.random.default_rng(2))
    assert abs(x.mean() - log_mgf_derivative(dist, theta)) < 4 * x.std() / math.sqrt(x.size)


def test_scenery_field_pure_and_keyed():
    dist = SceneryDistribution(1.5)
    f = SceneryField(dist, 7)
    sites = np.array([[0, 0, 0], [1, 0, 0], [5, -3, 2]])
    v = f.values(sites)
    assert np.array_equal(SceneryField(dist, 7).values(sites[::-1]), v[::-1])
    assert f[(1, 0, 0)] == v[1]
    assert not np.array_equal(SceneryField(dist, 7, replica=1).values(sites), v)
    assert np.allclose(f.scaled(2.0).values(sites), 2 * v)
    fixed = SceneryField.fixed({(0, 0): 1.5}, default=-1.0)
    assert fixed[(0, 0)] == 1.5 and fixed[(3, 3)] == -1.0


def test_scenery_field_law():
    dist = SceneryDistribution(2.0)
    g = np.stack(np.meshgrid(np.arange(-60, 60), np.arange(-60, 60)), -1).reshape(-1, 2)
    v = SceneryField(dist, 1).values(g)
    assert stats.kstest(v, stats.norm(scale=math.sqrt(0.5)).cdf).pvalue > 1e-3
