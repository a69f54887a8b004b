import dataclasses
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from rwrs.partition import (
    NoAdmissibleN,
    PartitionScheme,
    RegimeViolation,
    build_scheme,
    classify,
    classify_counts,
    d_down_chebyshev,
    d_up_probability,
    event_decomposition_check,
    regime_delta,
    up_envelope,
)
from rwrs.process import sample_rwrs
from rwrs.scenery import SceneryDistribution
from rwrs.walk import LocalTimeField, WalkConfig

# N for (alpha, d) at n = 1e4, 1e6, 1e8, 1e12 (y = 1), frozen from the closed
# form N = max(1, ceil(1 + log(((a - b) log n) / 2) / log(1 + eps0))) below
FROZEN_N = {
    (2.0, 5): (6, 11, 14, 19),
    (1.5, 4): (1, 3, 5, 7),
    (1.5, 5): (1, 3, 4, 6),
    (1.5, 7): (1, 3, 3, 5),
    (2.0, 7): (4, 7, 8, 11),
}
NS = (1e4, 1e6, 1e8, 1e12)


def closed_form_n(alpha, d, n):
    a, b = alpha / (alpha + 1), 1 / (alpha + 1)
    delta0 = (1 / alpha - 2 / d) / (1 - 2 / d)
    eps0 = (delta0 / 2) / (1 - delta0 / 2)
    total = (a - b) * math.log(n)
    return max(1, math.ceil(1 + math.log(total / 2) / math.log(1 + eps0) - 1e-12))


def test_hand_values_alpha2_d5():
    s = build_scheme(2.0, 5, 1e6, 1.0)
    # delta0 = (1/2 - 2/5) / (1 - 2/5) = 1/6, eps0 = (1/12) / (11/12) = 1/11
    assert s.delta0 == pytest.approx(1 / 6, abs=1e-15)
    assert s.eps0 == pytest.approx(1 / 11, abs=1e-15)
    assert s.a == pytest.approx(2 / 3) and s.b == pytest.approx(1 / 3)


@pytest.mark.parametrize("key", sorted(FROZEN_N))
def test_frozen_n(key):
    alpha, d = key
    got = tuple(build_scheme(alpha, d, n, 1.0).N for n in NS)
    assert got == FROZEN_N[key]
    assert got == tuple(closed_form_n(alpha, d, n) for n in NS)


@given(st.integers(3, 9), st.floats(0.0, 0.999), st.floats(3.0, 14.0), st.floats(0.2, 5.0))
def test_scheme_invariants(d, frac, log10n, y):
    alpha = 1.0 + frac * (d / 2 - 1.0)
    assume(alpha < d / 2)
    try:
        s = build_scheme(alpha, d, 10**log10n, y)
    except NoAdmissibleN:
        return
    assert max(s.invariant_residuals().values()) <= 1e-12
    assert math.fsum(s.y_list) + s.y_down + s.y_up == pytest.approx(y, rel=1e-12)
    if s.N:
        assert s.chi_range[0] <= s.chi <= s.chi_range[1]
        assert list(s.b_list) == sorted(s.b_list)
        g = s.gamma_list
        assert all(g[i + 1] <= g[i] + 1e-15 for i in range(len(g) - 1))
        assert g[0] < s.a
        assert s.a * alpha - (alpha - 1) * g[0] > s.a


@given(st.sampled_from([(1.5, 4), (1.5, 5), (2.0, 5), (2.0, 7)]), st.floats(0.5, 2.0))
def test_n_nondecreasing_in_n(key, y):
    alpha, d = key
    ns = [build_scheme(alpha, d, 10**k, y).N for k in range(4, 15)]
    assert ns == sorted(ns)


def test_regime_violation_message():
    with pytest.raises(RegimeViolation, match="requires 1 <= alpha < d/2") as exc:
        build_scheme(2.0, 4, 1e6, 1.0)
    assert str(exc.value).startswith("regime violation: requires 1 <= alpha < d/2")
    with pytest.raises(RegimeViolation):
        build_scheme(0.9, 5, 1e6, 1.0)
    with pytest.raises(ValueError):
        build_scheme(2.0, 5, 1e6, 1.0, z_threshold=1.5)


def test_alpha_one_has_no_levels():
    s = build_scheme(1.0, 3, 1e4, 1.0)
    assert s.N == 0 and s.y_list == (1 / 3,)
    assert s.level0_limit == pytest.approx(s.up_limit)


def test_text_round_trip_exact():
    s = build_scheme(2.0, 5, 1e8, 0.5)
    t = PartitionScheme.from_text(s.to_text())
    assert t == s


def test_classify_boundaries():
    s = build_scheme(2.0, 5, 1e6, 1.0)
    up = s.up_limit  # 100 for y = 1, n = 1e6
    counts = np.array([1, math.floor(s.level0_limit), math.ceil(s.level0_limit),
                       math.ceil(up) - 1, math.ceil(up)])
    lab = classify_counts(counts, s)
    assert lab[-1] == s.N + 1  # l >= (y n)^a is up
    assert lab[-2] == s.N
    assert lab[0] in (-1, 0)
    assert all(lab[i] <= lab[i + 1] for i in range(len(lab) - 1))


@given(st.integers(10, 2000), st.integers(0, 2**31), st.floats(0.01, 0.5))
def test_classification_is_partition_and_decomposition_holds(n, seed, y):
    cfg, dist = WalkConfig(5), SceneryDistribution(2.0)
    s = build_scheme(2.0, 5, n, y, z_threshold=y / 10)
    smp = sample_rwrs(cfg, dist, n, seed)
    cls = classify(smp.local_times, s, smp.scenery_values)
    assert cls.labels.size == len(smp.local_times)
    assert set(np.unique(cls.labels)) <= set(range(-1, s.N + 2))
    assert cls.reconstruct() == smp.x_n  # bit for bit
    assert not event_decomposition_check(smp, s).violated


def test_decomposition_fires_when_event_happens():
    lt = LocalTimeField.from_mapping({(0, 0, 0): 5, (1, 0, 0): 5})
    from rwrs.process import RwrsSample

    smp = RwrsSample(lt, np.array([3.0, 3.0]), 30.0)
    s = build_scheme(2.0, 5, 9, 1.0, z_threshold=0.1)
    rep = event_decomposition_check(smp, s)
    assert not rep.vacuous and rep.fired and not rep.violated


def test_up_class_probability_and_envelope():
    s = build_scheme(1.0, 3, 64, 1.0)
    e = d_up_probability(WalkConfig(3), s, 20000, 1)
    assert 0 < e.probability < 0.05
    assert up_envelope(64, 1.0, 0.5, 1.0) == pytest.approx(64 * math.exp(-8))
    # the up limit cannot be reached in n steps
    big = build_scheme(1.0, 3, 4, 25.0)  # up limit 10 > n + 1
    assert d_up_probability(WalkConfig(3), big, 100, 1).hits == 0


def test_down_bound_properties():
    dist = SceneryDistribution(2.0)
    s = build_scheme(2.0, 5, 1e4, 1.0)
    grid = np.linspace(0, 0.5, 51)
    b1 = d_down_chebyshev(None, dist, s, grid)
    assert b1.log_bound < 0 and 0 < b1.lam <= 0.5
    b2 = d_down_chebyshev(None, dist, dataclasses.replace(s, z_threshold=s.z_threshold / 2), grid)
    assert b2.log_bound < b1.log_bound
    zero = d_down_chebyshev(None, dist, dataclasses.replace(s, y_down=0.0), grid)
    assert zero.log_bound == 0 and zero.lam == 0


def test_regime_delta():
    assert regime_delta(1.0, 3) == pytest.approx(1.0)
    assert regime_delta(2.0, 4) == pytest.approx(0.0)
