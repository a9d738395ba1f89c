import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speciate.ising import c_rs
from speciate.mixture import MixtureModel, log_2cosh
from speciate.replica import (
    PopulationError,
    ReplicaPopulation,
    _push,
    eigenvalue_slope,
    f_rs_analytic,
    f_rs_analytic_many,
    iterate_population,
    mean_diff_analytic,
)
from speciate.speciation import estimate_free_entropy_stats

QUICK = dict(population_size=100_000, n_sweeps=80, burn_in=20)


@settings(max_examples=100, deadline=None)
@given(st.floats(-300, 300), st.floats(0, 5))
def test_cavity_kernel_matches_direct_formula(u, beta):
    b = np.array([beta])
    pop = np.array([[u]])
    out = np.empty((1, 1))
    _push(pop, pop, np.array([True]), np.array([0]), np.array([0.25]), b, out)
    ref = 0.25 + np.logaddexp(-beta, u + beta) - np.logaddexp(beta, u - beta)
    assert out[0, 0] == pytest.approx(ref, abs=1e-12)


def test_zero_field_fixed_point():
    rng = np.random.default_rng(0)
    state = ReplicaPopulation.initial(0.8, [0.3, 1.2], 0.0, size=500)
    state.pop_plus[:] = rng.normal(scale=3, size=state.pop_plus.shape)
    state.pop_minus[:] = rng.normal(scale=3, size=state.pop_minus.shape)
    # contraction rate at the fixed point is tanh(beta_s) = 0.83 for beta_s = 1.2
    state = iterate_population(state, 300, rng)
    assert np.max(np.abs(state.pop_plus)) < 1e-12
    assert np.max(np.abs(state.pop_minus)) < 1e-12
    for res in eigenvalue_slope(state):
        assert res.k == pytest.approx(log_2cosh(res.beta_s), abs=1e-14)
        assert abs(res.f_rs) < 1e-14


@pytest.mark.parametrize("beta_r", [0.0, 0.5, 1.0, 2.0])
def test_zero_field_identity_small_gamma(beta_r):
    # gamma = e^{-10}/sqrt(1 - e^{-20}) < 1e-4
    res = f_rs_analytic_many(beta_r, [0.0, 0.5, 1.0, 2.0], 10.0, **QUICK)
    assert all(abs(r.f_rs) < 1e-5 for r in res)


def test_zero_field_limit_t20():
    assert abs(f_rs_analytic(0.5, 1.0, 20.0, **QUICK).f_rs) < 1e-6


def test_deterministic_under_seed():
    a = f_rs_analytic(0.5, 1.0, 1.0, seed=4, **QUICK)
    b = f_rs_analytic(0.5, 1.0, 1.0, seed=4, **QUICK)
    c = f_rs_analytic(0.5, 1.0, 1.0, seed=5, **QUICK)
    assert a == b
    assert a.f_rs != c.f_rs


def test_validation():
    with pytest.raises(ValueError):
        f_rs_analytic(0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        f_rs_analytic(0.5, 1.0, 1.0, n_sweeps=10, burn_in=10)


def test_unconverged_population_is_refused():
    # a tiny population cannot pass the 64-bin histogram test
    with pytest.raises(PopulationError) as e:
        f_rs_analytic(0.5, 1.0, 1.0, population_size=500, n_sweeps=60, burn_in=10)
    assert e.value.convergence_metric > 0.02


def test_mean_diff_uses_joint_run():
    rr, rs = f_rs_analytic_many(0.5, [0.5, 1.0], 1.2, seed=2, **QUICK)
    assert mean_diff_analytic(0.5, 1.0, 1.2, seed=2, **QUICK) == rr.f_rs - rs.f_rs


@pytest.fixture(scope="module")
def default_run():
    return f_rs_analytic_many(0.5, [0.5, 1.0], 1.5)


def test_default_settings_converge(default_run):
    assert all(r.convergence_metric < 0.02 for r in default_run)


def test_population_doubling(default_run):
    big = f_rs_analytic_many(0.5, [0.5, 1.0], 1.5, population_size=200_000, seed=1)
    for a, b in zip(default_run, big):
        assert abs(a.f_rs - b.f_rs) < 1e-3


def test_kl_difference_matches_monte_carlo(default_run):
    rr, rs = default_run
    diff = rr.f_rs - rs.f_rs
    assert diff >= 0
    mc = estimate_free_entropy_stats(MixtureModel.ising([0.5, 1.0]), 0, 1, 1.5, 10_000, 21, 3200)
    assert abs(diff - mc.diff_mean) < 3 * mc.std_error


def test_same_temperature_matches_monte_carlo():
    rep = f_rs_analytic(0.7, 0.7, 1.5)
    mc = estimate_free_entropy_stats(MixtureModel.ising([0.7]), 0, 0, 1.5, 10_000, 22, 3200)
    assert abs(rep.f_rs - mc.mean) < 2e-3


def test_large_time_asymptotic_gap():
    t = 6.0
    diff = mean_diff_analytic(0.5, 1.0, t)
    ref = c_rs(0.5, 1.0) / 4 * math.exp(-4 * t)
    assert diff == pytest.approx(ref, rel=0.10)
