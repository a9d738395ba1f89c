"""Replica-symmetric average free entropy of the diffused random-field Ising chain.

Data a are drawn from the chain at ``beta_r`` and diffused to time t, so the
field seen by the model chain at ``beta_s`` is h_i = gamma^2 a_i + gamma z_i
with gamma = e^{-t}/sqrt(delta_t). In the n -> 0 limit the leading eigenvector
of the replicated transfer matrix is a pair of densities over the cavity ratio
x = Z_i(+)/Z_i(-), one per value of the planted spin a_i. Those densities are
represented by equal-weight populations of u = log x and iterated with

    u' = 2 gamma z + 2 gamma^2 a' + log[(e^{-b_s} + x e^{b_s}) / (e^{b_s} + x e^{-b_s})],

where the parent is drawn from the branch a with probability
e^{beta_r a a'} / (2 cosh beta_r). The O(n) eigenvalue slope is

    k = beta_s + <log(1 + e^{-2 beta_s} x)>,

and subtracting log(2 cosh beta_s) gives the per-spin free entropy with the
same normalization as ``ising.free_entropy_rfim``.

Several model temperatures can share one population run; they then see the
same planted chain and noise, which makes differences f_rr - f_rs far less
noisy than independent runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from speciate.core import make_schedule
from speciate.mixture import log_2cosh

N_BINS = 64


class PopulationError(RuntimeError):
    """The population collapsed or failed to converge."""

    def __init__(self, message: str, convergence_metric: float = math.nan):
        super().__init__(message)
        self.convergence_metric = convergence_metric


@dataclass
class ReplicaPopulation:
    """Populations of log cavity ratios, conditioned on the planted spin.

    ``pop_plus`` and ``pop_minus`` have shape (size, S): one column per model
    inverse temperature in ``beta_s``. All members carry weight 1/size.
    """

    pop_plus: np.ndarray
    pop_minus: np.ndarray
    gamma: float
    beta_r: float
    beta_s: np.ndarray
    sweeps_done: int = 0
    k_trace: list = field(default_factory=list)
    hist_trace: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.pop_plus.shape[0]

    @property
    def b(self) -> np.ndarray:
        return np.exp(-2.0 * self.beta_s)

    @classmethod
    def initial(cls, beta_r: float, beta_s, gamma: float, size: int = 100_000) -> "ReplicaPopulation":
        beta_s = np.atleast_1d(np.asarray(beta_s, dtype=np.float64))
        zeros = np.zeros((size, beta_s.size))
        return cls(zeros.copy(), zeros.copy(), float(gamma), float(beta_r), beta_s)


@dataclass(frozen=True)
class ReplicaResult:
    k: float
    f_rs: float
    convergence_metric: float
    beta_r: float = math.nan
    beta_s: float = math.nan
    t: float = math.nan
    k_std_error: float = math.nan


@numba.njit(cache=True, nogil=True)
def _push(parent_same, parent_other, same, idx, shift, beta_s, out):
    """out[i, j] = shift[i] + cavity map of the chosen parent for model beta_s[j].

    The map log[(e^{-b} + e^{u+b}) / (e^{b} + e^{u-b})] is odd in u; for u >= 0
    it equals log[(e^{b} + e^{-b} w) / (e^{-b} + e^{b} w)] with w = e^{-u} <= 1.
    """
    m = out.shape[1]
    ep = np.exp(beta_s)
    em = np.exp(-beta_s)
    for i in range(out.shape[0]):
        src = parent_same if same[i] else parent_other
        k = idx[i]
        for j in range(m):
            u = src[k, j]
            w = math.exp(-abs(u))
            c = math.log((ep[j] + em[j] * w) / (em[j] + ep[j] * w))
            out[i, j] = shift[i] + (c if u >= 0 else -c)


@numba.njit(cache=True, nogil=True)
def _mean_log1p_exp(pop, offset):
    """Column means of log(1 + e^{u + offset[j]})."""
    n, m = pop.shape
    out = np.zeros(m)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            v = pop[i, j] + offset[j]
            acc += max(v, 0.0) + math.log1p(math.exp(-abs(v)))
        out[j] = acc / n
    return out


def _slope_terms(state: ReplicaPopulation) -> np.ndarray:
    """beta_s + population mean of log(1 + b e^u), averaged over both branches."""
    shifted = -2.0 * state.beta_s
    e_plus = _mean_log1p_exp(state.pop_plus, shifted)
    e_minus = _mean_log1p_exp(state.pop_minus, shifted)
    g2 = state.gamma**2
    return 0.5 * ((state.beta_s - g2 + e_plus) + (state.beta_s + g2 + e_minus))


def _histogram(state: ReplicaPopulation, edges: np.ndarray) -> np.ndarray:
    u = np.concatenate([state.pop_plus[:, 0], state.pop_minus[:, 0]])
    counts, _ = np.histogram(np.clip(u, edges[0], edges[-1]), bins=edges)
    return counts / counts.sum()


def iterate_population(
    state: ReplicaPopulation,
    n_sweeps: int,
    rng: np.random.Generator,
    record_from: int | None = None,
    snapshot_at: tuple[int, ...] = (),
) -> ReplicaPopulation:
    """Apply ``n_sweeps`` updates of the n=0 kernel and return the new state.

    Args:
        state: current populations.
        n_sweeps: number of sweeps; each sweep rebuilds both branches.
        rng: random source.
        record_from: if given, the slope estimate is appended to ``k_trace``
            after every sweep whose (1-based) index is >= record_from.
        snapshot_at: sweep indices at which a 64-bin histogram of u is stored
            in ``hist_trace`` for convergence diagnostics.
    """
    size = state.size
    beta_s = state.beta_s
    p_stay = 1.0 / (1.0 + math.exp(-2.0 * state.beta_r))
    n_same = int(round(p_stay * size))
    g = state.gamma
    plus, minus = state.pop_plus, state.pop_minus
    k_trace = list(state.k_trace)
    hist_trace = dict(state.hist_trace)
    edges = None
    for sweep in range(state.sweeps_done + 1, state.sweeps_done + n_sweeps + 1):
        new = []
        for sign in (1.0, -1.0):
            # stratified draws: every parent slot is used once, the branch
            # split is exact and the noise has exact zero mean and unit variance
            same = np.zeros(size, dtype=np.bool_)
            same[rng.permutation(size)[:n_same]] = True
            idx = rng.permutation(size)
            z = rng.standard_normal(size)
            z -= z.mean()
            z /= z.std()
            shift = 2.0 * g * z + 2.0 * g * g * sign
            out = np.empty_like(plus)
            if sign > 0:
                _push(plus, minus, same, idx, shift, beta_s, out)
            else:
                _push(minus, plus, same, idx, shift, beta_s, out)
            new.append(out)
        plus, minus = new
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            raise PopulationError(f"non-finite population at sweep {sweep}")
        current = ReplicaPopulation(plus, minus, g, state.beta_r, beta_s, sweep)
        if record_from is not None and sweep >= record_from:
            k_trace.append(_slope_terms(current))
        if sweep in snapshot_at:
            if edges is None:
                lo, hi = np.quantile(np.concatenate([plus[:, 0], minus[:, 0]]), [0.001, 0.999])
                if hi - lo < 1e-12:
                    lo, hi = lo - 1.0, hi + 1.0
                edges = np.linspace(lo, hi, N_BINS + 1)
                hist_trace["edges"] = edges
            hist_trace[sweep] = _histogram(current, hist_trace.get("edges", edges))
    spread = np.ptp(np.concatenate([plus[:, 0], minus[:, 0]]))
    if g > 0 and spread == 0.0 and size > 1:
        raise PopulationError("population collapsed onto a single atom")
    return ReplicaPopulation(plus, minus, g, state.beta_r, beta_s, state.sweeps_done + n_sweeps, k_trace, hist_trace)


def convergence_metric(state: ReplicaPopulation) -> float:
    """Total-variation distance between the two latest stored histograms (0 if none needed)."""
    sweeps = sorted(k for k in state.hist_trace if k != "edges")
    if len(sweeps) < 2:
        return 0.0 if state.gamma == 0 else math.nan
    a, b = state.hist_trace[sweeps[-2]], state.hist_trace[sweeps[-1]]
    return 0.5 * float(np.abs(a - b).sum())


def eigenvalue_slope(state: ReplicaPopulation, threshold: float = 0.02) -> list[ReplicaResult]:
    """O(n) eigenvalue slope k and the normalized free entropy, one entry per model beta.

    Uses the average of the recorded post burn-in estimates when available,
    otherwise the current population alone.

    Raises:
        PopulationError: when the convergence metric exceeds ``threshold``.
    """
    metric = convergence_metric(state)
    if not (metric <= threshold) and not math.isnan(metric):
        raise PopulationError(f"population not converged (TV distance {metric:.4f})", metric)
    if state.k_trace:
        trace = np.array(state.k_trace)
        k = trace.mean(axis=0)
        # sweeps are correlated; batch means over 10 blocks give an honest error
        n_blocks = min(10, len(trace))
        blocks = np.array([blk.mean(axis=0) for blk in np.array_split(trace, n_blocks)])
        se = blocks.std(axis=0, ddof=1) / math.sqrt(n_blocks) if n_blocks > 1 else np.full_like(k, math.nan)
    else:
        k = _slope_terms(state)
        se = np.full_like(k, math.nan)
    return [
        ReplicaResult(
            k=float(k[j]),
            f_rs=float(k[j] - log_2cosh(state.beta_s[j])),
            convergence_metric=metric,
            beta_r=state.beta_r,
            beta_s=float(state.beta_s[j]),
            k_std_error=float(se[j]),
        )
        for j in range(state.beta_s.size)
    ]


def f_rs_analytic_many(
    beta_r: float,
    betas_s,
    t: float,
    population_size: int = 100_000,
    n_sweeps: int = 200,
    burn_in: int = 50,
    seed: int = 0,
) -> list[ReplicaResult]:
    """Average free entropies f_rs(t) for one planted beta_r and several model betas."""
    sched = make_schedule(t)
    if sched.degenerate:
        raise ValueError("t must be positive")
    if n_sweeps <= burn_in:
        raise ValueError("n_sweeps must exceed burn_in")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    state = ReplicaPopulation.initial(beta_r, betas_s, sched.gamma, population_size)
    checkpoints = (max(burn_in, n_sweeps - 50), n_sweeps)
    state = iterate_population(state, n_sweeps, rng, record_from=burn_in + 1, snapshot_at=checkpoints)
    results = eigenvalue_slope(state)
    return [
        ReplicaResult(r.k, r.f_rs, r.convergence_metric, r.beta_r, r.beta_s, sched.t, r.k_std_error)
        for r in results
    ]


def f_rs_analytic(
    beta_r: float,
    beta_s: float,
    t: float,
    population_size: int = 100_000,
    n_sweeps: int = 200,
    seed: int = 0,
    burn_in: int = 50,
) -> ReplicaResult:
    """Average per-spin free entropy of model ``beta_s`` on data diffused from ``beta_r``."""
    return f_rs_analytic_many(beta_r, [beta_s], t, population_size, n_sweeps, burn_in, seed)[0]


def mean_diff_analytic(beta_r: float, beta_s: float, t: float, **kwargs) -> float:
    """f_rr(t) - f_rs(t) from a single joint population run."""
    rr, rs = f_rs_analytic_many(beta_r, [beta_r, beta_s], t, **kwargs)
    return rr.f_rs - rs.f_rs
