import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrs.process import evaluate_x, sample_rwrs, sample_x, second_moment
from rwrs.scenery import SceneryDistribution, SceneryField
from rwrs.walk import LocalTimeField, WalkConfig, local_times, simulate_path


def test_evaluate_x_hand_example():
    lt = LocalTimeField.from_mapping({(0,): 3, (1,): 1, (-1,): 2})
    field = SceneryField.fixed({(0,): 0.5, (1,): -2.0, (-1,): 1.0})
    assert evaluate_x(lt, field) == 3 * 0.5 - 2.0 + 2 * 1.0


@given(st.integers(1, 4), st.integers(0, 300), st.integers(0, 2**31), st.sampled_from([1.0, 1.5, 2.0]))
def test_x_is_sum_over_time_of_scenery(d, n, seed, alpha):
    dist = SceneryDistribution(alpha)
    s = sample_rwrs(WalkConfig(d), dist, n, seed)
    field = SceneryField(dist, seed)
    path = simulate_path(WalkConfig(d), n, seed)
    # sum over k of eta(S_k), time by time
    direct = math.fsum(field.values(path.positions).tolist())
    assert s.x_n == pytest.approx(direct, rel=1e-12, abs=1e-12)
    assert s.local_times.counts.sum() == n + 1


def test_sample_rwrs_deterministic():
    dist = SceneryDistribution(1.5)
    a = sample_rwrs(WalkConfig(3), dist, 200, 4, replica=2)
    b = sample_rwrs(WalkConfig(3), dist, 200, 4, replica=2)
    assert a.x_n == b.x_n and np.array_equal(a.scenery_values, b.scenery_values)


def test_batch_x_law_matches_path_sampler():
    # second moments of the compiled batch and the explicit sampler agree
    cfg, dist = WalkConfig(3), SceneryDistribution(1.5)
    x, ss, _ = sample_x(cfg, dist, 100, 20000, 1)
    ref = np.array([sample_rwrs(cfg, dist, 100, 2, r).x_n for r in range(2000)])
    se = math.hypot((x * x).std() / math.sqrt(x.size), (ref * ref).std() / math.sqrt(ref.size))
    assert abs((x * x).mean() - (ref * ref).mean()) < 4 * se


@pytest.mark.parametrize("alpha", [1.0, 1.5, 2.0])
def test_decoupling_identity(alpha):
    m = second_moment(WalkConfig(3), SceneryDistribution(alpha), 300, 20000, 5)
    assert abs(m.z) < 4
    assert m.decoupled == pytest.approx(m.value, rel=0.1)


def test_second_moment_d1_scale():
    # E[X_n^2] = E[eta^2] E[sum l^2] and E[sum l^2] ~ c n^(3/2) in d = 1
    m1 = second_moment(WalkConfig(1), SceneryDistribution(2.0), 500, 5000, 1)
    m2 = second_moment(WalkConfig(1), SceneryDistribution(2.0), 2000, 5000, 1)
    r1, r2 = m1.value / 500**1.5, m2.value / 2000**1.5
    assert 0.8 < r2 / r1 < 1.25
