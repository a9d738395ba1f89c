import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_gradient, enum_log_marginal, enum_log_partition, enum_magnetization
from speciate.core import forward_diffuse, integrate_backward, make_schedule
from speciate.ising import (
    IsingScore,
    bayes_attribution,
    c_rs,
    component_log_evidence,
    exact_score,
    free_entropy_rfim,
    integrate_backward_ising,
    log_marginal,
    posterior_mean,
    sample_chain,
)
from speciate.mixture import IsingComponent, MixtureModel


def _nn_corr(chains, k=1):
    return float(np.mean(chains[:, k:] * chains[:, :-k]))


def test_sample_chain_infinite_temperature():
    rng = np.random.default_rng(0)
    chains = sample_chain(0.0, 2, rng, size=100_000)
    c = _nn_corr(chains)
    assert abs(c) < 4 / math.sqrt(100_000)
    assert set(np.unique(chains)) == {-1.0, 1.0}


@pytest.mark.parametrize("k", [1, 2, 5])
def test_sample_chain_correlations(k):
    rng = np.random.default_rng(k)
    chains = sample_chain(0.5, 1000, rng, size=200)
    prods = (chains[:, k:] * chains[:, :-k]).ravel()
    # products along one chain are a Markov chain with correlation tanh(beta)^k per step of k
    target = math.tanh(0.5) ** k
    var = 1 - target**2
    rho = math.tanh(0.5) ** k
    se = math.sqrt(var * (1 + rho) / (1 - rho) * k / prods.size)
    assert abs(prods.mean() - target) < 4 * se


def test_sample_chain_zero_temperature():
    chains = sample_chain(20.0, 50, np.random.default_rng(3), size=1000)
    assert np.all(chains == chains[:, :1])
    assert {-1.0, 1.0} <= set(chains[:, 0])


def test_free_entropy_zero_field():
    assert free_entropy_rfim(0.8, np.zeros(64), make_schedule(1.0)) == 0.0


def test_free_entropy_infinite_temperature():
    rng = np.random.default_rng(4)
    x = rng.normal(size=40)
    sched = make_schedule(0.6)
    h = x * sched.field_scale
    assert free_entropy_rfim(0.0, x, sched) == pytest.approx(np.mean(np.log(np.cosh(h))), rel=1e-12)


def test_free_entropy_rejects_nonfinite():
    with pytest.raises(ValueError):
        free_entropy_rfim(0.5, np.array([0.0, np.nan]), make_schedule(1.0))


@pytest.mark.parametrize("n", [2, 5, 9, 12, 14])
def test_free_entropy_enumeration(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(20 if n == 14 else 100):
        beta = float(rng.uniform(0, 1.5))
        t = float(rng.uniform(0.05, 3))
        x = rng.normal(scale=1.5, size=n)
        sched = make_schedule(t)
        h = x * sched.field_scale
        ref = (enum_log_partition(beta, h) - IsingComponent(beta).log_z(n)) / n
        assert free_entropy_rfim(beta, x, sched) == pytest.approx(ref, abs=1e-10)


def test_free_entropy_extreme_fields():
    # strong fields must neither overflow nor lose the exact value
    x = np.array([300.0, -250.0, 400.0, 5.0])
    sched = make_schedule(0.01)
    h = x * sched.field_scale
    ref = (enum_log_partition(0.7, h) - IsingComponent(0.7).log_z(4)) / 4
    assert free_entropy_rfim(0.7, x, sched) == pytest.approx(ref, rel=1e-12)
    big = np.full(10_000, 50.0)
    assert math.isfinite(free_entropy_rfim(1.0, big, make_schedule(0.01)))


def test_attribution_identical_components():
    mix = MixtureModel.ising([0.7, 0.7, 0.7])
    x = np.random.default_rng(5).normal(size=30)
    np.testing.assert_allclose(bayes_attribution(mix, x, make_schedule(0.5)), 1 / 3, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0.0, 2.0), min_size=2, max_size=5),
    st.integers(0, 2**32 - 1),
    st.floats(0.01, 5.0),
)
def test_attribution_row_stochastic(betas, seed, t):
    mix = MixtureModel.ising(betas)
    x = np.random.default_rng(seed).normal(scale=3, size=50)
    p = bayes_attribution(mix, x, make_schedule(t))
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12


def test_attribution_shift_invariance():
    mix = MixtureModel.ising([0.2, 0.9, 1.4], [0.2, 0.5, 0.3])
    x = np.random.default_rng(6).normal(size=60)
    sched = make_schedule(0.4)
    lev = component_log_evidence(mix, x, sched)
    p = np.exp(lev - lev.max())
    p /= p.sum()
    lev2 = lev + 1234.5
    q = np.exp(lev2 - lev2.max())
    q /= q.sum()
    np.testing.assert_allclose(bayes_attribution(mix, x, sched), p, atol=1e-12)
    np.testing.assert_allclose(q, p, atol=1e-12)


def _attribution_trials(t, trials=1000, n=800):
    mix = MixtureModel.ising([0.5, 1.0])
    rng = np.random.default_rng(7)
    sched = make_schedule(t)
    out = np.empty((trials, 2))
    for i in range(trials):
        a = sample_chain(1.0, n, rng)
        out[i] = bayes_attribution(mix, forward_diffuse(a, t, rng), sched)
    return out


def test_attribution_concentrates_before_speciation():
    p = _attribution_trials(0.05)
    assert np.mean(p[:, 1] > 0.99) >= 0.99


def test_attribution_mixes_after_speciation():
    p = _attribution_trials(3.0)
    assert np.mean(np.all((p > 0.05) & (p < 0.95), axis=1)) > 0.5


def test_posterior_mean_independent_spins():
    mix = MixtureModel.ising([0.0])
    x = np.random.default_rng(8).normal(size=30)
    sched = make_schedule(0.7)
    np.testing.assert_allclose(posterior_mean(mix, x, sched), np.tanh(x * sched.field_scale), rtol=1e-13)


@pytest.mark.parametrize("n", [3, 8, 11])
def test_posterior_mean_enumeration(n):
    rng = np.random.default_rng(9 + n)
    mix = MixtureModel.ising([0.7])
    for _ in range(100):
        t = float(rng.uniform(0.1, 3))
        x = rng.normal(size=n)
        sched = make_schedule(t)
        ref = enum_magnetization(0.7, x * sched.field_scale)
        np.testing.assert_allclose(posterior_mean(mix, x, sched), ref, atol=1e-10, rtol=0)


def test_posterior_mean_mixture_enumeration():
    rng = np.random.default_rng(12)
    mix = MixtureModel.ising([0.3, 1.1], [0.4, 0.6])
    n = 8
    for _ in range(20):
        sched = make_schedule(float(rng.uniform(0.2, 2)))
        x = rng.normal(size=n)
        h = x * sched.field_scale
        w = bayes_attribution(mix, x, sched)
        ref = w[0] * enum_magnetization(0.3, h) + w[1] * enum_magnetization(1.1, h)
        np.testing.assert_allclose(posterior_mean(mix, x, sched), ref, atol=1e-10)


def test_posterior_mean_saturation():
    mix = MixtureModel.ising([0.5, 1.0])
    m = posterior_mean(mix, np.full(20, 1e3), make_schedule(0.5))
    assert np.all(np.abs(m - 1) < 1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 5.0), st.floats(0.1, 100.0))
def test_posterior_mean_bounded(seed, t, scale):
    mix = MixtureModel.ising([0.1, 0.8, 2.0])
    x = np.random.default_rng(seed).normal(scale=scale, size=40)
    m = posterior_mean(mix, x, make_schedule(t))
    assert np.all(np.abs(m) <= 1)


@pytest.mark.parametrize("n", [4, 8, 10])
def test_exact_score_finite_difference(n):
    rng = np.random.default_rng(20 + n)
    betas, weights = [0.5, 1.0], [0.5, 0.5]
    mix = MixtureModel.ising(betas, weights)
    for _ in range(10 if n == 10 else 30):
        t = float(rng.uniform(0.2, 3))
        x = rng.normal(size=n)
        fd = central_gradient(lambda y: enum_log_marginal(betas, weights, y, t), x)
        s = exact_score(mix, x, make_schedule(t))
        assert np.all(np.abs(s - fd) / np.maximum(1, np.abs(fd)) < 1e-5)


def test_log_marginal_enumeration():
    rng = np.random.default_rng(30)
    mix = MixtureModel.ising([0.2, 0.9], [0.3, 0.7])
    for _ in range(20):
        t = float(rng.uniform(0.05, 3))
        x = rng.normal(size=9)
        assert log_marginal(mix, x, t) == pytest.approx(enum_log_marginal([0.2, 0.9], [0.3, 0.7], x, t), abs=1e-10)


def test_exact_score_fixed_point():
    mix = MixtureModel.ising([0.5, 1.0])
    sched = make_schedule(0.8)
    x = np.random.default_rng(31).normal(size=20)
    m = posterior_mean(mix, x, sched)
    s = exact_score(mix, x, sched)
    np.testing.assert_allclose(s, -(x - sched.decay * m) / sched.delta, rtol=1e-14)


def test_exact_score_large_time():
    mix = MixtureModel.ising([0.5, 1.0])
    n = 100
    x = np.random.default_rng(32).normal(size=n)
    x *= math.sqrt(n) / np.linalg.norm(x)
    s = exact_score(mix, x, make_schedule(10.0))
    assert np.linalg.norm(s + x) / np.linalg.norm(x) < 1e-3


def test_ising_score_model_matches_compiled_path():
    mix = MixtureModel.ising([0.4, 1.2])
    x0 = np.random.default_rng(33).normal(size=30)
    a = integrate_backward(IsingScore(mix, 30), x0, 0.5, 0.01, 0.01, np.random.default_rng(1))
    b = integrate_backward_ising(mix, x0, 0.5, 0.01, 0.01, np.random.default_rng(1))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_c_rs_special_values():
    assert c_rs(0.7, 0.7) == 0.0
    b = 0.9
    tb = math.tanh(b)
    assert c_rs(0.0, b) == pytest.approx(2 * tb**2 / (1 - tb**2), rel=1e-13)
    series = 2 * sum((math.tanh(0.5) ** k - math.tanh(1.0) ** k) ** 2 for k in range(1, 201))
    assert c_rs(0.5, 1.0) == pytest.approx(series, abs=1e-10)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_c_rs_symmetric_nonnegative(a, b):
    assert c_rs(a, b) == c_rs(b, a)
    assert c_rs(a, b) >= 0


@pytest.mark.parametrize("t", [0.3, 1.0])
def test_gibbs_inequality(t):
    mix = MixtureModel.ising([0.3, 0.6, 1.2])
    n = 200
    sched = make_schedule(t)
    rng = np.random.default_rng(34)
    for r in range(3):
        f = np.empty((1000, 3))
        for i in range(1000):
            x = forward_diffuse(sample_chain(mix.betas[r], n, rng), t, rng)
            f[i] = [free_entropy_rfim(b, x, sched) for b in mix.betas]
        for s in range(3):
            d = f[:, r] - f[:, s]
            se = d.std(ddof=1) / math.sqrt(len(d)) if s != r else 0.0
            assert d.mean() >= -3 * se
