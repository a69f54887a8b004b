import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrs.walk import (
    LocalTimeField,
    Path,
    Region,
    WalkConfig,
    box_hitting_probability,
    estimate_return_prob,
    green_function,
    local_time_histograms,
    local_time_tails,
    local_times,
    localization_fit,
    max_displacement,
    region_visits,
    simulate_path,
    sojourn_time,
    sojourn_times,
    trap_return_probability,
)

from oracles import P_RETURN_3D, WATSON_U3

dims = st.integers(1, 5)
laws = st.sampled_from(["simple", "lazy-simple"])


def test_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(0)
    with pytest.raises(ValueError):
        WalkConfig(3, "levy")
    assert WalkConfig(2, "lazy-simple").lazy


def test_path_rejects_illegal_steps():
    cfg = WalkConfig(2)
    with pytest.raises(ValueError):
        Path(cfg, [[0, 0], [2, 0]])
    with pytest.raises(ValueError):
        Path(cfg, [[1, 0], [0, 0]])
    with pytest.raises(ValueError):
        Path(cfg, [[0, 0], [0, 0]])  # the simple walk cannot stay put
    Path(WalkConfig(2, "lazy-simple"), [[0, 0], [0, 0], [0, 1]])


@given(dims, laws, st.integers(0, 400), st.integers(0, 2**31))
def test_local_times_partition_time(d, law, n, seed):
    path = simulate_path(WalkConfig(d, law), n, seed)
    lt = local_times(path)
    assert path.positions.shape == (n + 1, d)
    assert lt.counts.sum() == n + 1
    assert 1 <= lt.range_size <= n + 1
    assert lt.self_intersection >= n + 1
    assert max_displacement(path) <= n


@given(dims, st.integers(1, 200), st.integers(0, 2**31))
def test_local_times_match_counter(d, n, seed):
    path = simulate_path(WalkConfig(d), n, seed)
    ref = Counter(map(tuple, path.positions.tolist()))
    assert local_times(path).as_dict() == dict(ref)


def test_path_deterministic_and_replica_keyed():
    cfg = WalkConfig(3)
    a = simulate_path(cfg, 50, 9)
    assert np.array_equal(a.positions, simulate_path(cfg, 50, 9).positions)
    assert not np.array_equal(a.positions, simulate_path(cfg, 50, 9, replica=1).positions)


def test_local_time_field_lookup():
    lt = LocalTimeField.from_mapping({(0, 0): 2, (1, 0): 1})
    assert lt[(0, 0)] == 2 and lt[(5, 5)] == 0
    assert lt.total_time == 2
    vals, mults = lt.histogram()
    assert vals.tolist() == [1, 2] and mults.tolist() == [1, 1]
    with pytest.raises(ValueError):
        LocalTimeField(np.zeros((1, 2)), np.array([3]), 5)


def test_region_box_convention():
    r = Region.box(2, 3)
    assert r.sites.shape == (8, 3)
    assert r.lo.tolist() == [-1, -1, -1] and r.hi.tolist() == [0, 0, 0]
    assert Region.box(1, 3).sites.tolist() == [[0, 0, 0]]


def test_box_hitting_probability_matches_gamblers_ruin():
    # killed outside [-R, R]: P_x(hit 0 first) = 1 - |x| / (R + 1)
    R = 7
    h = box_hitting_probability(1, R)
    x = np.arange(-R, R + 1)
    assert np.allclose(h, 1 - np.abs(x) / (R + 1), atol=1e-10)


def test_trap_return_probability_increases_to_return_probability():
    cfg = WalkConfig(3)
    p = [trap_return_probability(cfg, R) for R in (2, 4, 8)]
    assert p[0] < p[1] < p[2] < P_RETURN_3D
    # the lazy walk returns by holding with probability 1/2
    lazy = trap_return_probability(WalkConfig(3, "lazy-simple"), 4)
    assert lazy == pytest.approx(0.5 + 0.5 * p[1])


def test_return_probability_against_watson_integral():
    est = estimate_return_prob(WalkConfig(3), 2 * 10**5, 17, horizon=10**5)
    se = est.std_error
    # horizon cut: returns after time T have probability of order T^(-1/2)
    assert abs(est.probability - P_RETURN_3D) < 4 * se + 0.002


def test_green_function_at_origin_is_watson_integral():
    g = green_function(WalkConfig(3), (0, 0, 0), 10**5, 4)
    assert abs(g.value - WATSON_U3) < 4 * g.std_error + 0.005


def test_roulette_is_unbiased():
    cfg = WalkConfig(3)
    origin = Region.of([(0, 0, 0)], 3)
    plain = region_visits(cfg, origin, 40000, 3, 2000, -1, 2, 0, 2).tail(2)
    rr = region_visits(cfg, origin, 40000, 4, 2000, -1, 2, 8, 2).tail(2)
    se = math.hypot(plain.std_error, rr.std_error)
    assert abs(plain.probability - rr.probability) < 4 * se


def test_local_time_tail_is_geometric():
    cfg = WalkConfig(3)
    tails = local_time_tails(cfg, 4, 10**5, 8, horizon=10**5)
    assert tails[0].probability == 1.0
    p = tails[1].probability
    for k in (3, 4):
        t = tails[k - 1]
        assert abs(t.probability - p ** (k - 1)) < 4 * t.std_error + 0.003


def test_results_independent_of_worker_count():
    cfg = WalkConfig(3)
    reg = Region.box(2, 3)
    a = region_visits(cfg, reg, 9000, 5, 1000, -1, 0, 8, 10, workers=1)
    b = region_visits(cfg, reg, 9000, 5, 1000, -1, 0, 8, 10, workers=2)
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.s1, b.s1)


def test_sojourn_requires_transience_and_room():
    with pytest.raises(ValueError):
        sojourn_times(WalkConfig(2), [(0, 0)], 10, 1)
    with pytest.raises(ValueError):
        sojourn_times(WalkConfig(3), Region.box(4, 3), 10, 1, escape_radius=2)
    with pytest.warns(UserWarning):
        estimate_return_prob(WalkConfig(2), 100, 1, horizon=100)


def test_sojourn_time_counts_time_zero():
    r = sojourn_time(WalkConfig(3), [(0, 0, 0)], 5)
    assert r.count >= 1
    far = sojourn_time(WalkConfig(3), [(4, 0, 0)], 5, horizon=1)
    assert far.count == 0


@given(st.integers(1, 4), st.integers(0, 300), st.integers(0, 2**31))
def test_histogram_batch_consistent(d, n, seed):
    b = local_time_histograms(WalkConfig(d), n, 20, seed)
    for r in range(b.replicas):
        v, m = b.path(r)
        assert int(np.dot(v, m)) == n + 1
        assert int(np.dot(v * v, m)) == b.self_intersection[r]
        assert v.max() == b.max_local_time[r]
        assert m.sum() == b.range_size[r]


def test_histogram_batch_matches_path_law():
    # mean range size of the kernel and of explicit paths agree
    cfg = WalkConfig(3)
    b = local_time_histograms(cfg, 200, 4000, 1)
    ref = np.array([local_times(simulate_path(cfg, 200, 2, r)).range_size for r in range(1000)])
    se = math.hypot(b.range_size.std() / math.sqrt(4000), ref.std() / math.sqrt(1000))
    assert abs(b.range_size.mean() - ref.mean()) < 4 * se


def test_localization_fit_single_site_rate():
    fit = localization_fit(WalkConfig(3), 1, 40000, 6)
    # one site: P(l > t) = p^t
    assert fit.slope == pytest.approx(-math.log(P_RETURN_3D), rel=0.1)
    assert len(fit.t) >= 5
