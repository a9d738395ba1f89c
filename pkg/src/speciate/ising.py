"""1D Ising mixture targets: exact sampling, random-field free entropies, exact score.

All chains are open (couplings between sites i and i+1 for i < N). A forward
diffused state x acts on the spins as the external field h = e^{-t} x / delta_t.
Transfer-matrix sweeps keep a running 2-vector normalized to unit 1-norm and
pull the field factor e^{|h|} out of every site, so nothing overflows for any
N or field strength.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from speciate.core import IntegrationError, Schedule, make_schedule
from speciate.mixture import IsingComponent, MixtureModel, log_2cosh

__all__ = [
    "IsingScore",
    "bayes_attribution",
    "c_rs",
    "exact_score",
    "free_entropy_rfim",
    "integrate_backward_ising",
    "log_marginal",
    "posterior_mean",
    "sample_chain",
]


def sample_chain(beta: float, n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Exact sample(s) of the open chain e^{beta sum s_i s_(i+1)} / Z.

    The first spin is uniform and each following spin copies its predecessor
    with probability e^beta / (2 cosh beta).
    """
    if n < 2:
        raise ValueError("a chain needs at least two spins")
    shape = (n,) if size is None else (size, n)
    # flip probability e^{-beta}/(2cosh beta) = 1/(1 + e^{2 beta})
    p_flip = 1.0 / (1.0 + math.exp(min(2.0 * beta, 700.0)))
    u = rng.random(shape)
    steps = np.where(u[..., 1:] < p_flip, -1, 1).astype(np.int8)
    first = np.where(u[..., :1] < 0.5, 1, -1).astype(np.int8)
    return np.cumprod(np.concatenate([first, steps], axis=-1), axis=-1, dtype=np.int8).astype(np.float64)


# Per-site normalizers lie in [e^{-beta}, e^{beta}], so their running product
# can be kept for LOG_EVERY sites before taking a log.
LOG_EVERY = 16


@numba.njit(cache=True, nogil=True)
def _log_partition(beta, h):
    """log sum_s exp(beta sum s_i s_(i+1) + sum h_i s_i) by a left-to-right sweep."""
    n = h.shape[0]
    eb = math.exp(beta)
    emb = math.exp(-beta)
    a = abs(h[0])
    e2 = math.exp(-2.0 * a)
    if h[0] >= 0:
        vp, vm = 1.0, e2
    else:
        vp, vm = e2, 1.0
    s = vp + vm
    vp /= s
    vm /= s
    logz = a + math.log(s)
    acc = 1.0
    for i in range(1, n):
        hi = h[i]
        a = abs(hi)
        logz += a
        e2 = math.exp(-2.0 * a)
        p = eb * vp + emb * vm
        m = emb * vp + eb * vm
        if hi >= 0:
            m *= e2
        else:
            p *= e2
        s = p + m
        vp = p / s
        vm = m / s
        acc *= s
        if i % LOG_EVERY == 0:
            logz += math.log(acc)
            acc = 1.0
    return logz + math.log(acc)


@numba.njit(cache=True, nogil=True)
def _batch_log_partition(beta, h, out):
    for k in range(h.shape[0]):
        out[k] = _log_partition(beta, h[k])


@numba.njit(cache=True, nogil=True)
def _magnetization(beta, h, out):
    """Single-site magnetizations into ``out``; returns the log partition sum.

    Prefix vectors L_i include the fields up to site i, suffix vectors R_i sum
    over the spins after i; the site marginal is proportional to L_i * R_i.
    """
    n = h.shape[0]
    eb = math.exp(beta)
    emb = math.exp(-beta)
    lp = np.empty(n)
    lm = np.empty(n)
    e2s = np.empty(n)
    logz = 0.0
    acc = 1.0
    vp = 0.5
    vm = 0.5
    for i in range(n):
        hi = h[i]
        a = abs(hi)
        logz += a
        e2 = math.exp(-2.0 * a)
        e2s[i] = e2
        if i == 0:
            p = 1.0
            m = 1.0
        else:
            p = eb * vp + emb * vm
            m = emb * vp + eb * vm
        if hi >= 0:
            m *= e2
        else:
            p *= e2
        s = p + m
        vp = p / s
        vm = m / s
        lp[i] = vp
        lm[i] = vm
        acc *= s
        if i % LOG_EVERY == 0:
            logz += math.log(acc)
            acc = 1.0
    logz += math.log(acc)
    rp = 0.5
    rm = 0.5
    for i in range(n - 1, -1, -1):
        num_p = lp[i] * rp
        num_m = lm[i] * rm
        out[i] = (num_p - num_m) / (num_p + num_m)
        if i > 0:
            fp = rp
            fm = rm
            if h[i] >= 0:
                fm *= e2s[i]
            else:
                fp *= e2s[i]
            np_ = eb * fp + emb * fm
            nm_ = emb * fp + eb * fm
            s = np_ + nm_
            rp = np_ / s
            rm = nm_ / s
    return logz


@numba.njit(cache=True, nogil=True)
def _mixture_posterior(betas, log_w, log_zs, h, mean_out):
    """Posterior spin mean of the mixture into ``mean_out``; returns component log-evidences."""
    n = h.shape[0]
    r_count = betas.shape[0]
    mags = np.empty((r_count, n))
    logits = np.empty(r_count)
    for r in range(r_count):
        logits[r] = log_w[r] + _magnetization(betas[r], h, mags[r]) - log_zs[r]
    top = logits.max()
    total = 0.0
    for r in range(r_count):
        total += math.exp(logits[r] - top)
    for i in range(n):
        mean_out[i] = 0.0
    for r in range(r_count):
        w = math.exp(logits[r] - top) / total
        for i in range(n):
            mean_out[i] += w * mags[r, i]
    # the weighted sum can overshoot +-1 by an ulp when every component saturates
    for i in range(n):
        mean_out[i] = min(1.0, max(-1.0, mean_out[i]))
    return logits


@numba.njit(cache=True, nogil=True)
def _mixture_score(betas, log_w, log_zs, x, decay, delta, out):
    n = x.shape[0]
    h = x * (decay / delta)
    _mixture_posterior(betas, log_w, log_zs, h, out)
    for i in range(n):
        out[i] = -(x[i] - decay * out[i]) / delta


@numba.njit(cache=True, nogil=True)
def _backward_kernel(betas, log_w, log_zs, y, t_start, n_steps, dt, rng):
    """Fused Euler-Maruyama loop; same update order as core.integrate_backward."""
    n = y.shape[0]
    score = np.empty(n)
    noise_scale = math.sqrt(2.0 * dt)
    for step in range(n_steps):
        t = t_start - step * dt
        decay = math.exp(-t)
        delta = -math.expm1(-2.0 * t)
        _mixture_score(betas, log_w, log_zs, y, decay, delta, score)
        for i in range(n):
            if not math.isfinite(score[i]):
                return step
        for i in range(n):
            y[i] += (y[i] + 2.0 * score[i]) * dt
        xi = rng.standard_normal(n)
        for i in range(n):
            y[i] += noise_scale * xi[i]
    return -1


def _fields(x: np.ndarray, sched: Schedule) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    return x * sched.field_scale


def _mixture_arrays(mix: MixtureModel, n: int):
    betas = mix.betas
    log_zs = np.array([IsingComponent(b).log_z(n) for b in betas])
    return betas, mix.log_weights, log_zs


def free_entropy_rfim(beta: float, x: np.ndarray, sched: Schedule) -> float:
    """Per-spin log-likelihood f_s(x, t) of component ``beta``, up to the shared Gaussian factor.

    Equals (1/N)[log sum_s exp(beta sum s_i s_(i+1) + h.s) - log Z(beta)] with
    Z(beta) = 2 (2 cosh beta)^(N-1), so it vanishes at x = 0.
    """
    h = _fields(x, sched)
    n = h.shape[0]
    return (_log_partition(float(beta), h) - IsingComponent(beta).log_z(n)) / n


def component_log_evidence(mix: MixtureModel, x: np.ndarray, sched: Schedule) -> np.ndarray:
    """Vector of log w_s + N f_s(x, t) over the components of ``mix``."""
    h = _fields(x, sched)
    betas, log_w, log_zs = _mixture_arrays(mix, h.shape[0])
    return np.array([log_w[r] + _log_partition(betas[r], h) - log_zs[r] for r in range(mix.R)])


def _softmax(logits: np.ndarray) -> np.ndarray:
    p = np.exp(logits - logits.max())
    return p / p.sum()


def bayes_attribution(mix: MixtureModel, x: np.ndarray, sched: Schedule) -> np.ndarray:
    """Posterior probability P(s | x; t) that ``x`` was diffused from each component."""
    return _softmax(component_log_evidence(mix, x, sched))


def posterior_mean(mix: MixtureModel, x: np.ndarray, sched: Schedule) -> np.ndarray:
    """<s_i>_x, the posterior mean of the clean spins given the noisy state."""
    h = _fields(x, sched)
    betas, log_w, log_zs = _mixture_arrays(mix, h.shape[0])
    out = np.empty_like(h)
    _mixture_posterior(betas, log_w, log_zs, h, out)
    return out


def exact_score(mix: MixtureModel, x: np.ndarray, sched: Schedule) -> np.ndarray:
    """grad_x log P_t(x) = -(x - e^{-t} <s>_x) / delta_t."""
    x = np.asarray(x, dtype=np.float64)
    m = posterior_mean(mix, x, sched)
    return -(x - sched.decay * m) / sched.delta


def log_marginal(mix: MixtureModel, x: np.ndarray, t: float) -> float:
    """log P_t(x) of the diffused mixture, normalized Gaussian constants included."""
    sched = make_schedule(t)
    sched.require_nondegenerate()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    lev = component_log_evidence(mix, x, sched)
    top = lev.max()
    gauss = -0.5 * n * math.log(2 * math.pi * sched.delta) - (x @ x + n * sched.decay**2) / (2 * sched.delta)
    return gauss + top + math.log(np.exp(lev - top).sum())


class IsingScore:
    """Exact score of a diffused Ising mixture, usable with ``integrate_backward``."""

    def __init__(self, mix: MixtureModel, dim: int):
        self.mix = mix
        self.dim = dim
        self._betas, self._log_w, self._log_zs = _mixture_arrays(mix, dim)

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        sched = make_schedule(t)
        sched.require_nondegenerate()
        out = np.empty(self.dim)
        _mixture_score(self._betas, self._log_w, self._log_zs, np.asarray(x, dtype=np.float64),
                       sched.decay, sched.delta, out)
        return out


def integrate_backward_ising(
    mix: MixtureModel,
    x_start: np.ndarray,
    t_start: float,
    t_min: float,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Compiled equivalent of ``core.integrate_backward(IsingScore(mix, N), ...)``.

    Consumes the rng identically, so both routes give the same trajectory.
    """
    if not (t_start > t_min >= dt > 0):
        raise ValueError(f"need t_start > t_min >= dt > 0, got {t_start}, {t_min}, {dt}")
    y = np.array(x_start, dtype=np.float64, copy=True)
    betas, log_w, log_zs = _mixture_arrays(mix, y.shape[0])
    n_steps = int(round((t_start - t_min) / dt))
    failed = _backward_kernel(betas, log_w, log_zs, y, float(t_start), n_steps, float(dt), rng)
    if failed >= 0:
        raise IntegrationError("score returned non-finite values", failed)
    return y


def c_rs(beta_r: float, beta_s: float) -> float:
    """Thermodynamic-limit covariance distance 2 sum_k (tanh^k b_r - tanh^k b_s)^2."""
    if beta_r < 0 or beta_s < 0:
        raise ValueError("inverse temperatures must be non-negative")
    # the geometric sums combine to a cancellation-free closed form,
    # exactly zero for equal temperatures
    d = beta_r - beta_s
    return 2.0 * math.sinh(d) ** 2 * math.cosh(beta_r + beta_s) / math.cosh(d)


def log_z_per_spin_limit(beta: float) -> float:
    return log_2cosh(beta)
