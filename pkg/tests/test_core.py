import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speciate.core import (
    IntegrationError,
    ScoreModel,
    TrajectoryBatch,
    derive_sample_rng,
    forward_diffuse,
    integrate_backward,
    make_schedule,
    map_samples,
)
from speciate.gaussian import SingleGaussianScore


def test_schedule_at_zero_is_degenerate():
    s = make_schedule(0.0)
    assert s.delta == 0.0 and s.decay == 1.0 and s.degenerate
    assert math.isinf(s.gamma)
    with pytest.raises(ValueError):
        s.field_scale


def test_schedule_large_t():
    s = make_schedule(50.0)
    assert s.delta == pytest.approx(1.0, abs=1e-15)
    assert s.decay < 1e-20


def test_schedule_half_log_two():
    s = make_schedule(0.5 * math.log(2))
    assert s.decay == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert s.delta == pytest.approx(0.5, rel=1e-15)
    assert s.gamma == pytest.approx(1.0, rel=1e-14)


def test_schedule_rejects_negative_time():
    with pytest.raises(ValueError):
        make_schedule(-1e-9)


# beyond t ~ 18, 1 - e^{-2t} rounds to exactly 1.0 in double precision
@given(st.floats(min_value=1e-6, max_value=15.0))
def test_schedule_invariants(t):
    s = make_schedule(t)
    assert 0 <= s.delta < 1
    assert s.delta == pytest.approx(1 - s.decay**2, abs=1e-15)
    assert s.gamma**2 * s.delta == pytest.approx(s.decay**2, rel=1e-14, abs=1e-300)


def test_forward_diffuse_at_zero_is_identity():
    a = np.array([1.0, -1.0, 0.3])
    assert np.array_equal(forward_diffuse(a, 0.0, np.random.default_rng(0)), a)


@pytest.mark.parametrize("t", [0.1, 1.0, 3.0])
def test_forward_diffuse_moments_from_zero(t):
    x = forward_diffuse(np.zeros(100_000), t, np.random.default_rng(1))
    delta = 1 - math.exp(-2 * t)
    n = x.size
    assert abs(x.mean()) < 4 * math.sqrt(delta / n)
    # variance of the sample variance of a Gaussian is 2 sigma^4/(n-1)
    assert abs(x.var(ddof=1) - delta) < 4 * delta * math.sqrt(2 / (n - 1))


def test_forward_diffuse_mean_at_t1():
    x = forward_diffuse(np.ones(100_000), 1.0, np.random.default_rng(2))
    sd = math.sqrt((1 - math.exp(-2)) / x.size)
    assert abs(x.mean() - math.exp(-1)) < 4 * sd


def test_backward_standard_normal_fixed_point():
    rng = np.random.default_rng(3)
    n_samples, n = 10_000, 50
    x0 = rng.standard_normal((n_samples, n))
    y = integrate_backward(lambda x, t: -x, x0, 5.0, 1e-3, 1e-3, rng)
    v = y.var(axis=0, ddof=1).mean()
    # per-coordinate variance averaged over 50 independent coordinates
    se = math.sqrt(2 / (n_samples - 1)) / math.sqrt(n)
    assert abs(v - 1.0) < 4 * se


def _gaussian_benchmark(dt, seed, n_samples=10_000, n=4, sigma2=4.0, t_min=1e-3):
    rng = np.random.default_rng(seed)
    t0 = 5.0
    gamma = sigma2 * math.exp(-2 * t0) + 1 - math.exp(-2 * t0)
    x0 = rng.standard_normal((n_samples, n)) * math.sqrt(gamma)
    return integrate_backward(SingleGaussianScore(sigma2, n), x0, t0, t_min, dt, rng)


def test_backward_single_gaussian_variance_four():
    y = _gaussian_benchmark(1e-3, 4)
    n_samples = y.shape[0]
    v = y.var(axis=0, ddof=1).mean()
    target = 4 * math.exp(-2e-3) + 1 - math.exp(-2e-3)
    se = target * math.sqrt(2 / (n_samples - 1)) / math.sqrt(y.shape[1])
    assert abs(v - target) < 4 * se


def test_backward_convergence_in_dt():
    y1 = _gaussian_benchmark(2e-3, 5, t_min=4e-3)
    y2 = _gaussian_benchmark(1e-3, 6, t_min=4e-3)
    n = y1.size
    m1, m2 = y1.mean(), y2.mean()
    v1, v2 = y1.var(), y2.var()
    assert abs(m1 - m2) < 4 * math.sqrt(2 * 4 / n)
    assert abs(v1 - v2) < 4 * math.sqrt(2 * 2 * 16 / n)


def test_backward_reports_failing_step():
    calls = []

    def bad(x, t):
        calls.append(t)
        return np.full_like(x, np.nan) if len(calls) == 7 else -x

    with pytest.raises(IntegrationError) as e:
        integrate_backward(bad, np.zeros(3), 1.0, 0.1, 0.01, np.random.default_rng(0))
    assert e.value.step == 6


def test_backward_validates_arguments():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        integrate_backward(lambda x, t: -x, np.zeros(2), 0.1, 0.2, 0.01, rng)
    with pytest.raises(ValueError):
        integrate_backward(lambda x, t: -x, np.zeros(2), 1.0, 0.001, 0.01, rng)


def test_score_model_protocol():
    assert isinstance(SingleGaussianScore(1.0, 3), ScoreModel)


def test_derive_sample_rng_deterministic_and_distinct():
    a = derive_sample_rng(123, 7).random(1000)
    b = derive_sample_rng(123, 7).random(1000)
    c = derive_sample_rng(123, 8).random(1000)
    d = derive_sample_rng(124, 7).random(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert not np.array_equal(derive_sample_rng(1, 2, 3).random(10), derive_sample_rng(1, 2, 4).random(10))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6))
def test_map_samples_independent_of_threads(threads):
    def fn(i):
        return derive_sample_rng(99, i).standard_normal(3)

    ref = map_samples(fn, 25, 1)
    out = map_samples(fn, 25, threads)
    assert all(np.array_equal(x, y) for x, y in zip(ref, out))


def test_trajectory_batch_validation():
    tb = TrajectoryBatch(np.zeros((3, 2)), 0.5, [0, 1, 1], 0)
    assert list(tb.sample_indices) == [0, 1, 2]
    with pytest.raises(ValueError):
        TrajectoryBatch(np.zeros((3, 2)), 0.5, [0, 1], 0)
    with pytest.raises(ValueError):
        TrajectoryBatch(np.zeros((2, 2)), 0.5, [0, -1], 0)
