"""Speciation criterion: free-entropy statistics, large-t asymptotics and solvers.

Two components r and s are distinguishable at time t while the mean per-spin
free-entropy gap f_rr - f_rs exceeds K times the standard deviation of the
per-sample gap. Where means coincide the gap decays like e^{-4t} and the
fluctuation scale like e^{-2t}/sqrt(N), which puts speciation at ~ (1/4) log N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from speciate.core import derive_sample_rng, make_schedule, map_samples
from speciate.ising import _batch_log_partition, c_rs, sample_chain
from speciate.mixture import IsingComponent, MixtureModel

__all__ = [
    "AsymptoticCoefficients",
    "BracketError",
    "DegeneratePairError",
    "FreeEntropyStats",
    "MeanDiffCurve",
    "MixtureModel",
    "NoTransitionError",
    "PairSolve",
    "PredictedStructure",
    "SpeciationSolveResult",
    "asymptotic_kl",
    "asymptotic_variance",
    "coefficients_from_moments",
    "criterion_rhs",
    "estimate_free_entropy_stats",
    "free_entropy_table",
    "log_grid",
    "mean_diff_curves",
    "predicted_attribution_structure",
    "solve_mixture_asymptotic",
    "solve_mixture_mc",
    "solve_mixture_replica",
    "solve_pair",
    "solve_speciation",
    "stats_from_table",
    "ts_first_moment",
    "ts_second_moment",
]

BLOCK = 64  # samples per derived rng stream in Monte-Carlo tables
STREAM_FREE_ENTROPY = 1


class NoTransitionError(ValueError):
    """The relevant coefficient vanishes, so no speciation time exists."""


class DegeneratePairError(ValueError):
    """C_rs = 0: the two components are indistinguishable at every time."""


class BracketError(ValueError):
    """The solver bracket does not straddle a sign change."""


@dataclass(frozen=True)
class AsymptoticCoefficients:
    a_rs: float
    C_rs: float
    S_rs: float


@dataclass(frozen=True)
class FreeEntropyStats:
    """Monte-Carlo statistics of f_s(x, t) for x diffused from component r.

    ``mean``/``variance`` describe f_s itself; ``diff_mean``/``diff_variance``
    describe the paired per-sample gap f_r - f_s, whose ``std_error`` is
    sqrt(diff_variance / n_samples). ``diff_variance_se`` is a bootstrap
    standard error of ``diff_variance``.
    """

    t: float
    r: int
    s: int
    mean: float
    variance: float
    n_samples: int
    diff_mean: float
    diff_variance: float
    std_error: float
    diff_variance_se: float


@dataclass(frozen=True)
class SpeciationSolveResult:
    t_rs: float
    K: float
    method: str
    bracket: tuple[float, float]


def coefficients_from_moments(mean_r, mean_s, cov_r, cov_s) -> AsymptoticCoefficients:
    """a_rs, C_rs and S_rs from the first two moments of two components."""
    mean_r, mean_s = np.asarray(mean_r, float), np.asarray(mean_s, float)
    cov_r, cov_s = np.asarray(cov_r, float), np.asarray(cov_s, float)
    n = mean_r.shape[0]
    if mean_s.shape != (n,) or cov_r.shape != (n, n) or cov_s.shape != (n, n):
        raise ValueError("moment shapes do not match")
    da = mean_r - mean_s
    dc = cov_r - cov_s
    a_rs = float(da @ da) / n
    c = float(np.sum(dc * dc)) / n
    s_rs = (2.0 * da @ (cov_s @ mean_s - cov_r @ mean_r) - da @ cov_s @ da) / (2.0 * n)
    return AsymptoticCoefficients(a_rs, c, float(s_rs))


def asymptotic_kl(coef: AsymptoticCoefficients, t: float) -> float:
    """Large-t per-spin KL divergence between the diffused components."""
    e2, e4 = math.exp(-2 * t), math.exp(-4 * t)
    return 0.5 * coef.a_rs * (e2 + e4) + 0.25 * coef.C_rs * e4 + coef.S_rs * e4


def asymptotic_variance(coef: AsymptoticCoefficients, t: float, n: int) -> float:
    """Large-t variance of (1/N)(log P_r - log P_s)."""
    e2, e4 = math.exp(-2 * t), math.exp(-4 * t)
    return coef.a_rs / n * (e2 + 2 * e4) + coef.C_rs / (2 * n) * e4


def ts_first_moment(a_rs: float, n: int, K: float = 1.0) -> float:
    if not a_rs > 0:
        raise NoTransitionError("a_rs must be positive")
    return 0.5 * math.log(n) - 0.5 * math.log(4.0 / a_rs) - math.log(K)


def ts_second_moment(c: float, n: int, K: float = 1.0) -> float:
    if not c > 0:
        raise NoTransitionError("C_rs must be positive")
    return 0.25 * math.log(n) - 0.25 * math.log(8.0 / c) - 0.5 * math.log(K)


def criterion_rhs(c: float, n: int, t: float, K: float = 1.0) -> float:
    """Fluctuation scale K sqrt(C_rs / 2N) e^{-2t}."""
    return K * math.sqrt(c / (2 * n)) * math.exp(-2 * t)


def solve_speciation(
    mean_diff: Callable[[float], float],
    c: float,
    n: int,
    K: float = 1.0,
    bracket: tuple[float, float] = (1e-3, 10.0),
    tol: float = 1e-6,
    method: str = "full-solve",
    fluctuation: Callable[[float], float] | None = None,
) -> SpeciationSolveResult:
    """Bisection root of |mean_diff(t)| - K sqrt(C_rs/2N) e^{-2t} inside ``bracket``.

    If ``fluctuation`` is given it replaces sqrt(C_rs/2N) e^{-2t} by a measured
    standard deviation of the per-spin log-likelihood gap, as a function of t.

    Raises:
        DegeneratePairError: if ``c`` is not positive.
        BracketError: if the gap does not exceed the fluctuation scale at the
            lower end and fall below it at the upper end.
    """
    if not c > 0:
        raise DegeneratePairError("C_rs = 0: components are indistinguishable")
    lo, hi = map(float, bracket)

    def g(t):
        if fluctuation is not None:
            return abs(mean_diff(t)) - K * fluctuation(t)
        return abs(mean_diff(t)) - criterion_rhs(c, n, t, K)

    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo > 0 and g_hi < 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: g={g_lo:.3e}, {g_hi:.3e}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return SpeciationSolveResult(0.5 * (lo + hi), K, method, (lo, hi))


def _merge_blocks(pairwise: np.ndarray) -> np.ndarray:
    """Transitive closure of a symmetric reflexive relation."""
    closed = pairwise.copy()
    r = len(closed)
    for k in range(r):
        closed |= closed[:, k : k + 1] & closed[k : k + 1, :]
    return closed


@dataclass(frozen=True)
class PredictedStructure:
    """``pairwise[r, s]``: row r merged with column s under the criterion.

    ``blocks`` closes the symmetric part (both directions merged) transitively.
    """

    pairwise: np.ndarray
    blocks: np.ndarray

    def groups(self) -> list[tuple[int, ...]]:
        seen, out = set(), []
        for r in range(len(self.blocks)):
            if r not in seen:
                members = tuple(int(s) for s in np.flatnonzero(self.blocks[r]))
                seen.update(members)
                out.append(members)
        return out


def predicted_attribution_structure(
    mixture: MixtureModel,
    t: float,
    n: int,
    pairwise_mean_diff: Callable[[int, int, float], float],
    K: float = 1.0,
    pair_c: Callable[[int, int], float] | None = None,
) -> PredictedStructure:
    """Predicted merged/unmerged pattern of the attribution matrix at time ``t``."""
    R = mixture.R
    if pair_c is None:
        betas = mixture.betas

        def pair_c(r, s):
            return c_rs(betas[r], betas[s])

    pairwise = np.eye(R, dtype=bool)
    for r in range(R):
        for s in range(R):
            if r == s:
                continue
            c = pair_c(r, s)
            if c <= 0:
                pairwise[r, s] = True
                continue
            pairwise[r, s] = abs(pairwise_mean_diff(r, s, t)) < criterion_rhs(c, n, t, K)
    return PredictedStructure(pairwise, _merge_blocks(pairwise & pairwise.T))


def free_entropy_table(
    mix: MixtureModel,
    r: int,
    t_grid: Sequence[float],
    n_samples: int,
    n: int,
    master_seed: int,
    threads: int = 1,
) -> np.ndarray:
    """f_s(x, t) for every model component s, sample, and grid time.

    Returns an array of shape (len(t_grid), n_samples, R). A sample keeps the
    same clean chain a and noise z at every grid time, x = a e^{-t} + sqrt(delta_t) z,
    so the curves over t are smooth.
    """
    t_grid = [float(t) for t in t_grid]
    scheds = [make_schedule(t) for t in t_grid]
    for sch in scheds:
        sch.require_nondegenerate()
    beta_r = mix.betas[r]
    betas = mix.betas
    log_zs = np.array([IsingComponent(b).log_z(n) for b in betas])
    n_blocks = -(-n_samples // BLOCK)

    def run_block(b):
        size = min(BLOCK, n_samples - b * BLOCK)
        rng = derive_sample_rng(master_seed, b, r, STREAM_FREE_ENTROPY)
        a = sample_chain(beta_r, n, rng, size=size)
        z = rng.standard_normal(a.shape)
        out = np.empty((len(t_grid), size, len(betas)))
        buf = np.empty(size)
        for k, sch in enumerate(scheds):
            h = (a * sch.decay + math.sqrt(sch.delta) * z) * sch.field_scale
            for j, beta in enumerate(betas):
                _batch_log_partition(beta, h, buf)
                out[k, :, j] = (buf - log_zs[j]) / n
        return out

    return np.concatenate(map_samples(run_block, n_blocks, threads), axis=1)


def _bootstrap_var_se(d: np.ndarray, master_seed: int, n_boot: int = 200) -> float:
    rng = derive_sample_rng(master_seed, 0, 99)
    idx = rng.integers(0, len(d), size=(n_boot, len(d)))
    return float(d[idx].var(axis=1, ddof=1).std(ddof=1))


def stats_from_table(table: np.ndarray, t: float, r: int, s: int, master_seed: int = 0) -> FreeEntropyStats:
    """FreeEntropyStats from one grid slice (n_samples, R) of ``free_entropy_table``."""
    fs = table[:, s]
    d = table[:, r] - fs
    m = len(fs)
    diff_var = float(d.var(ddof=1))
    return FreeEntropyStats(
        t=float(t),
        r=r,
        s=s,
        mean=float(fs.mean()),
        variance=float(fs.var(ddof=1)),
        n_samples=m,
        diff_mean=float(d.mean()),
        diff_variance=diff_var,
        std_error=math.sqrt(diff_var / m),
        diff_variance_se=0.0 if diff_var == 0 else _bootstrap_var_se(d, master_seed),
    )


def estimate_free_entropy_stats(
    mix: MixtureModel,
    r: int,
    s: int,
    t: float,
    n_samples: int,
    master_seed: int,
    n: int,
    threads: int = 1,
) -> FreeEntropyStats:
    """Monte-Carlo mean and variance of f_s(x, t), x diffused from component r."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    table = free_entropy_table(mix, r, [t], n_samples, n, master_seed, threads)[0]
    return stats_from_table(table, t, r, s, master_seed)


def log_grid(lo: float = 0.05, hi: float = 4.0, points: int = 40) -> np.ndarray:
    return np.geomspace(lo, hi, points)


@dataclass
class MeanDiffCurve:
    """Monotone cubic interpolant of a tabulated f_rr - f_rs curve."""

    t_grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self._interp = PchipInterpolator(self.t_grid, self.values, extrapolate=False)
        self._sd = PchipInterpolator(self.t_grid, np.sqrt(self.variances), extrapolate=False)

    def __call__(self, t: float) -> float:
        return float(self._interp(t))

    def sd(self, t: float) -> float:
        """Interpolated per-sample standard deviation of the gap."""
        return float(self._sd(t))

    @property
    def bracket(self) -> tuple[float, float]:
        return float(self.t_grid[0]), float(self.t_grid[-1])


def mean_diff_curves(
    mix: MixtureModel,
    r: int,
    n: int,
    n_samples: int,
    master_seed: int,
    t_grid: Sequence[float] | None = None,
    threads: int = 1,
) -> dict[int, MeanDiffCurve]:
    """Monte-Carlo f_rr - f_rs curves for every s != r from one shared table."""
    t_grid = log_grid() if t_grid is None else np.asarray(t_grid, float)
    table = free_entropy_table(mix, r, t_grid, n_samples, n, master_seed, threads)
    curves = {}
    for s in range(mix.R):
        if s == r:
            continue
        d = table[:, :, r] - table[:, :, s]
        curves[s] = MeanDiffCurve(
            np.asarray(t_grid),
            d.mean(axis=1),
            d.std(axis=1, ddof=1) / math.sqrt(n_samples),
            d.var(axis=1, ddof=1),
        )
    return curves


@dataclass(frozen=True)
class PairSolve:
    """Directional solves r->s and s->r; the pair is merged once both have merged."""

    r: int
    s: int
    forward: SpeciationSolveResult
    backward: SpeciationSolveResult

    @property
    def t_merge(self) -> float:
        return max(self.forward.t_rs, self.backward.t_rs)

    @property
    def bracket(self) -> tuple[float, float]:
        late = self.forward if self.forward.t_rs >= self.backward.t_rs else self.backward
        return late.bracket


def solve_pair(
    curve_rs: Callable[[float], float],
    curve_sr: Callable[[float], float],
    c: float,
    n: int,
    K: float,
    bracket: tuple[float, float],
    r: int,
    s: int,
    tol: float = 1e-6,
    method: str = "full-solve",
    empirical: bool = False,
) -> PairSolve:
    """Both directional solves; ``empirical`` uses the curves' measured spread."""
    fl_rs = curve_rs.sd if empirical else None
    fl_sr = curve_sr.sd if empirical else None
    fwd = solve_speciation(curve_rs, c, n, K, bracket, tol, method, fl_rs)
    bwd = solve_speciation(curve_sr, c, n, K, bracket, tol, method, fl_sr)
    return PairSolve(r, s, fwd, bwd)


def solve_mixture_mc(
    mix: MixtureModel,
    n: int,
    K: float = 1.0,
    n_samples: int = 10_000,
    master_seed: int = 0,
    t_grid: Sequence[float] | None = None,
    threads: int = 1,
    tol: float = 1e-6,
    fluctuation: str = "asymptotic",
) -> tuple[dict[tuple[int, int], PairSolve], dict[int, dict[int, MeanDiffCurve]]]:
    """Full solve of every pair from Monte-Carlo mean-difference interpolants.

    Args:
        fluctuation: "asymptotic" for the sqrt(C_rs/2N) e^{-2t} scale, or
            "empirical" for the Monte-Carlo standard deviation of the gap.
    """
    if fluctuation not in ("asymptotic", "empirical"):
        raise ValueError(f"unknown fluctuation mode {fluctuation!r}")
    curves = {r: mean_diff_curves(mix, r, n, n_samples, master_seed, t_grid, threads) for r in range(mix.R)}
    solves = {}
    betas = mix.betas
    for r in range(mix.R):
        for s in range(r + 1, mix.R):
            c = c_rs(betas[r], betas[s])
            fwd = curves[r][s]
            solves[(r, s)] = solve_pair(
                fwd, curves[s][r], c, n, K, fwd.bracket, r, s, tol, empirical=fluctuation == "empirical"
            )
    return solves, curves


def solve_mixture_asymptotic(mix: MixtureModel, n: int, K: float = 1.0) -> dict[tuple[int, int], float]:
    """Closed-form second-moment speciation time for every pair (zero-mean components)."""
    betas = mix.betas
    out = {}
    for r in range(mix.R):
        for s in range(r + 1, mix.R):
            c = c_rs(betas[r], betas[s])
            out[(r, s)] = ts_second_moment(c, n, K) if c > 0 else math.inf
    return out


def solve_mixture_replica(
    mix: MixtureModel,
    n: int,
    K: float = 1.0,
    bracket: tuple[float, float] = (0.05, 4.0),
    tol: float = 1e-3,
    population_size: int = 50_000,
    n_sweeps: int = 150,
    burn_in: int = 50,
    seed: int = 0,
) -> dict[tuple[int, int], PairSolve]:
    """Pair solves with the replica mean difference evaluated inside the bisection."""
    from speciate.replica import mean_diff_analytic

    betas = mix.betas
    solves = {}
    kwargs = dict(population_size=population_size, n_sweeps=n_sweeps, burn_in=burn_in, seed=seed)
    for r in range(mix.R):
        for s in range(r + 1, mix.R):
            c = c_rs(betas[r], betas[s])

            def fwd(t, br=betas[r], bs=betas[s]):
                return mean_diff_analytic(br, bs, t, **kwargs)

            def bwd(t, br=betas[r], bs=betas[s]):
                return mean_diff_analytic(bs, br, t, **kwargs)

            solves[(r, s)] = solve_pair(fwd, bwd, c, n, K, bracket, r, s, tol, method="full-solve")
    return solves
