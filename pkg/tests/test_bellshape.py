import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from rwrs.bellshape import (
    GridDensity,
    coefficient_monotonicity,
    convolve,
    is_bell_shaped,
    symmetric_sum_identity_check,
    weighted_tail,
)
from rwrs.scenery import SceneryDistribution, log_tail

GAUSS = SceneryDistribution(2.0)  # N(0, 1/2)


def gaussian_grid(var, W=12.0, M=2**14):
    return GridDensity.from_function(stats.norm(scale=math.sqrt(var)).pdf, W, M)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridDensity(1.0, 3, np.ones(4))
    with pytest.raises(ValueError):
        GridDensity(1.0, 4, np.ones(4))
    with pytest.raises(ValueError):
        GridDensity(1.0, 2, np.array([1.0, -1.0, 1.0]))


def test_gaussian_self_convolution():
    f = gaussian_grid(0.5)
    h = convolve(f, f)
    ref = stats.norm(scale=1.0).pdf(h.nodes)
    assert np.max(np.abs(h.values - ref)) < 1e-6
    assert h.mass == pytest.approx(f.mass**2, abs=1e-9)
    assert convolve(f, f, method="fft").values == pytest.approx(h.values, abs=1e-12)


def test_convolution_with_narrow_bump_is_identity():
    f = gaussian_grid(0.5, W=8.0, M=2**12)
    errs = []
    for width in (0.2, 0.05):
        bump = gaussian_grid(width**2, W=8.0, M=2**12)
        h = convolve(f, bump)
        errs.append(np.max(np.abs(h.value_at(f.nodes) - f.values)))
    assert errs[1] < errs[0] < 0.05


def test_spacing_mismatch():
    with pytest.raises(ValueError):
        convolve(gaussian_grid(1, M=64), gaussian_grid(1, M=128))


def test_bell_shape_detection():
    assert is_bell_shaped(GridDensity.from_distribution(GAUSS, 2**-6))
    unif = GridDensity.from_function(lambda t: np.where(t <= 1.0, 0.5, 0.0), 2.0, 400)
    assert is_bell_shaped(unif)
    bimodal = GridDensity.from_function(
        lambda t: 0.5 * (stats.norm.pdf(t, 2, 0.5) + stats.norm.pdf(t, -2, 0.5)), 8.0, 800)
    rep = is_bell_shaped(bimodal)
    assert not rep and rep.kind == "increasing" and 0 < rep.location < 2.1
    skew = GridDensity(1.0, 2, np.array([1.0, 2.0, 0.5]))
    assert is_bell_shaped(skew).kind == "even"


@given(st.floats(1.0, 3.0), st.floats(1.0, 3.0), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_convolution_preserves_bell_shape(a1, a2, s1, s2):
    f = GridDensity.from_distribution(SceneryDistribution(a1), 2**-5, scale=s1)
    g = GridDensity.from_distribution(SceneryDistribution(a2), 2**-5, scale=s2)
    h = convolve(f, g)
    assert is_bell_shaped(h, 1e-9)
    assert 1 - 1e-6 <= h.mass <= 1 + 1e-6


def test_grid_tail_of_gaussian_sum():
    # four unit coefficients on N(0, 1/2): the sum is N(0, 2)
    wt = weighted_tail([1, 1, 1, 1], GAUSS, 2.0, method="grid")
    assert wt.probability == pytest.approx(stats.norm.sf(math.sqrt(2)), abs=1e-6)


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
def test_single_coefficient_scaling(alpha):
    dist = SceneryDistribution(alpha)
    wt = weighted_tail([2.0], dist, 3.0, method="grid")
    assert wt.probability == pytest.approx(math.exp(log_tail(dist, 1.5)), abs=1e-6)
    mc = weighted_tail([2.0], dist, 3.0, replicas=200000, seed=1)
    assert abs(mc.probability - math.exp(log_tail(dist, 1.5))) < 4 * mc.std_error


def test_weighted_tail_validation():
    with pytest.raises(ValueError):
        weighted_tail([], GAUSS, 1.0)
    with pytest.raises(ValueError):
        weighted_tail([1.0, -1.0], GAUSS, 1.0)
    with pytest.raises(ValueError):
        weighted_tail([1.0], GAUSS, 0.0)
    with pytest.raises(ValueError):
        weighted_tail(np.ones(33), GAUSS, 1.0, method="grid")


def test_sandwich_by_extreme_coefficients():
    dist = SceneryDistribution(1.5)
    c = np.array([0.3, 0.7, 1.1, 0.5])
    mid = weighted_tail(c, dist, 1.5, method="grid").probability
    lo = weighted_tail(np.full(4, c.min()), dist, 1.5, method="grid").probability
    hi = weighted_tail(np.full(4, c.max()), dist, 1.5, method="grid").probability
    assert lo <= mid <= hi


def test_coefficient_monotonicity_mc():
    chk = coefficient_monotonicity([0.5, 0.5, 0.2], [0.6, 0.9, 0.2], SceneryDistribution(1.5),
                                   1.0, 100000, 3)
    assert not chk.violated and chk.p_small < chk.p_large
    with pytest.raises(ValueError):
        coefficient_monotonicity([1.0], [0.5], GAUSS, 1.0, 100, 1)


def test_identity_gaussian_pair():
    f = gaussian_grid(0.5)
    assert symmetric_sum_identity_check(f, f, 1.0) < 1e-6


@pytest.mark.parametrize("y", [0.5, 1.0, 2.0])
def test_identity_exponential_power(y):
    f = GridDensity.from_distribution(SceneryDistribution(1.5), 2**-8)
    assert symmetric_sum_identity_check(f, f, y) < 1e-5


def test_identity_degenerate_eta():
    f = gaussian_grid(0.5, W=8.0, M=2**12)
    g = gaussian_grid(1e-4, W=8.0, M=2**12)
    r = symmetric_sum_identity_check(f, g, 1.0)
    assert r < 1e-4
    assert convolve(f, g).tail(1.0) == pytest.approx(f.tail(1.0), abs=1e-3)
