import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptcl.env import (Jitter, SimClock, WorkerProfile, heterogeneity, make_bandwidths,
                         predicted_heterogeneity, round_update_time, training_work,
                         update_time)


def test_update_time_formula():
    p = WorkerProfile(0, bandwidth=5.0, compute_coeff=1.0)
    assert update_time(p, 10.0, 2.0) == pytest.approx(6.0)


def test_infinite_bandwidth_leaves_training_only():
    p = WorkerProfile(0, bandwidth=1e300, compute_coeff=0.5)
    assert update_time(p, 10.0, 8.0) == pytest.approx(4.0)


def test_smaller_upload_is_cheaper():
    p = WorkerProfile(0, bandwidth=2.0)
    assert round_update_time(p, 1.0, 2.0, 0) == pytest.approx(1.5)


def test_training_work_counts_forward_and_backward():
    assert training_work(100, 3) == 600


def test_heterogeneity_examples():
    assert heterogeneity([3.0, 3.0, 3.0]) == 0.0
    assert heterogeneity([10.0, 5.0]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        heterogeneity([1.0])
    with pytest.raises(ValueError):
        heterogeneity([1.0, 0.0])


def test_uniform_spread_matches_prediction():
    phis = [1 + (2 - 1) / 9 * (10 - w) for w in range(1, 11)]
    assert heterogeneity(phis) == pytest.approx(predicted_heterogeneity(2, 10), rel=1e-12)
    assert predicted_heterogeneity(2, 10) == pytest.approx(0.334, abs=1e-3)
    assert predicted_heterogeneity(1, 10) == 0.0


def test_bandwidth_example():
    b = make_bandwidths(5.0, 2.0, 2, 5.0, 2.0)
    assert b == pytest.approx([10 / 6, 5.0])
    phis = [update_time(WorkerProfile(i, bw, 1.0), 5.0, 2.0) for i, bw in enumerate(b)]
    assert phis == pytest.approx([8.0, 4.0])


def test_homogeneous_bandwidths():
    assert make_bandwidths(5.0, 1.0, 7, 1.0, 0.0) == [5.0] * 7


@given(st.floats(1.0, 30.0), st.integers(2, 20), st.floats(0.01, 10.0), st.floats(0.0, 5.0))
def test_bandwidths_realise_the_target_spread(sigma, W, size, t_train):
    b = make_bandwidths(5.0, sigma, W, size, t_train)
    phis = [t_train + 2 * size / bw for bw in b]
    assert max(phis) / min(phis) == pytest.approx(sigma, rel=1e-9)
    assert heterogeneity(phis) == pytest.approx(predicted_heterogeneity(sigma, W), abs=1e-9)
    assert phis[-1] == min(phis)


def test_jitter_is_reproducible_and_bounded():
    j = Jitter(0.2, seed=4)
    draws = [j.draw(w, t) for w in range(5) for t in range(20)]
    assert draws == [Jitter(0.2, seed=4).draw(w, t) for w in range(5) for t in range(20)]
    assert 0.8 <= min(draws) and max(draws) <= 1.2
    assert Jitter(0.0).draw(3, 3) == 1.0
    with pytest.raises(ValueError):
        Jitter(0.9)


def test_clock():
    c = SimClock()
    c.advance(1, 2.0)
    c.advance_to(2, 5.0)
    assert c.now == 5.0 and c.log == [(1, 0.0, 2.0), (2, 2.0, 5.0)]
    with pytest.raises(ValueError):
        c.advance(3, -1.0)
