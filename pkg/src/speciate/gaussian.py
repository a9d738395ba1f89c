"""Two-component Gaussian benchmarks with closed-form scores.

* ``GaussianMeansModel``: balanced mixture of N(+m, sigma^2 I) and N(-m, sigma^2 I).
* ``GaussianVarModel``: balanced mixture of N(0, (1 - delta) I) and N(0, (1 + delta) I).

After diffusing to time t a component with variance sigma^2 has variance
Gamma_t = sigma^2 e^{-2t} + 1 - e^{-2t}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateModelError",
    "GaussianMeansModel",
    "GaussianVarModel",
    "OverlapObservable",
    "RadialState",
    "closed_form_ts",
    "gm_free_entropy_diff",
    "gm_variance",
    "lambda_coeff",
    "potential_overlap",
    "potential_radial",
    "radial_drift",
    "score_means",
    "solve_curvature_time",
    "solve_gm_criterion",
]


class DegenerateModelError(ValueError):
    """The two components coincide, so no transition exists."""


def log_cosh(u):
    u = np.abs(u)
    return u + np.log1p(np.exp(-2.0 * u)) - math.log(2.0)


def _gamma_t(sigma2: float, t: float) -> float:
    e2 = math.exp(-2.0 * t)
    return sigma2 * e2 + (1.0 - e2)


@dataclass(frozen=True)
class GaussianMeansModel:
    m: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=np.float64))
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def N(self) -> int:
        return self.m.shape[0]

    @property
    def mu_tilde2(self) -> float:
        return float(self.m @ self.m) / self.N

    def gamma(self, t: float) -> float:
        return _gamma_t(self.sigma2, t)

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        return score_means(self, x, t)

    @property
    def dim(self) -> int:
        return self.N


@dataclass(frozen=True)
class GaussianVarModel:
    delta_param: float
    N: int

    def __post_init__(self):
        if not 0 <= self.delta_param < 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.N < 1:
            raise ValueError("N must be positive")

    def eps(self, t: float) -> float:
        return self.delta_param * math.exp(-2.0 * t)

    def gamma1(self, t: float) -> float:
        return 1.0 - self.eps(t)

    def gamma2(self, t: float) -> float:
        return 1.0 + self.eps(t)

    @property
    def dim(self) -> int:
        return self.N

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return -lambda_coeff(self, float(np.linalg.norm(x)), t) * x


@dataclass(frozen=True)
class RadialState:
    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError("r must be non-negative")

    @classmethod
    def from_state(cls, x: np.ndarray) -> "RadialState":
        x = np.asarray(x, dtype=np.float64)
        return cls(float(x @ x) / x.shape[0])


@dataclass(frozen=True)
class OverlapObservable:
    q: float

    @classmethod
    def from_state(cls, model: GaussianMeansModel, x: np.ndarray) -> "OverlapObservable":
        return cls(float(model.m @ np.asarray(x, dtype=np.float64)) / math.sqrt(model.N))


class SingleGaussianScore:
    """Score -x / Gamma_t of a diffused N(0, sigma^2 I) target."""

    def __init__(self, sigma2: float, dim: int):
        self.sigma2 = sigma2
        self.dim = dim

    def score(self, x: np.ndarray, t: float) -> np.ndarray:
        return -np.asarray(x) / _gamma_t(self.sigma2, t)


def score_means(model: GaussianMeansModel, x: np.ndarray, t: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = model.gamma(t)
    c = math.exp(-t) / g
    return -x / g + model.m * c * math.tanh(float(x @ model.m) * c)


def potential_overlap(model: GaussianMeansModel, q: float, t: float) -> float:
    """V(q, t) = q^2/2 - 2 mu^2 log cosh(q e^{-t} sqrt(N))."""
    u = q * math.exp(-t) * math.sqrt(model.N)
    return 0.5 * q * q - 2.0 * model.mu_tilde2 * float(log_cosh(u))


def overlap_curvature(model: GaussianMeansModel, t: float) -> float:
    """Second derivative of V(q, t) at q = 0."""
    return 1.0 - 2.0 * model.mu_tilde2 * model.N * math.exp(-2.0 * t)


def _log_evidence(model: GaussianVarModel, norm_x: float, t: float) -> tuple[float, float, float, float]:
    g1, g2 = model.gamma1(t), model.gamma2(t)
    n = model.N
    sq = norm_x * norm_x
    l1 = -0.5 * n * math.log(g1) - sq / (2.0 * g1)
    l2 = -0.5 * n * math.log(g2) - sq / (2.0 * g2)
    return l1, l2, g1, g2


def lambda_coeff(model: GaussianVarModel, norm_x: float, t: float) -> float:
    """Posterior average of 1/Gamma_i; the score is -lambda x."""
    l1, l2, g1, g2 = _log_evidence(model, norm_x, t)
    top = max(l1, l2)
    w1, w2 = math.exp(l1 - top), math.exp(l2 - top)
    return (w1 / g1 + w2 / g2) / (w1 + w2)


def _lambda_minus_one(model: GaussianVarModel, norm_x: float, t: float) -> float:
    """lambda - 1 without the cancellation of the direct difference.

    With Gamma_{1,2} = 1 -/+ eps, lambda - 1 = eps (m1/(1-eps) - m2/(1+eps)).
    """
    eps = model.eps(t)
    n = model.N
    sq = norm_x * norm_x
    # l1 - l2 from log1p terms, so tiny eps keeps relative accuracy
    d = -0.5 * n * (math.log1p(-eps) - math.log1p(eps)) - 0.5 * sq * (2.0 * eps / (1.0 - eps * eps))
    m1 = 0.5 * (1.0 + math.tanh(0.5 * d))
    m2 = 1.0 - m1
    return eps * (m1 / (1.0 - eps) - m2 / (1.0 + eps))


def radial_drift(model: GaussianVarModel, r: float, t: float) -> float:
    """Drift 2(r+1) - 4 r lambda(sqrt(N r), t) of the reverse radial SDE."""
    if r < 0:
        raise ValueError("r must be non-negative")
    return 2.0 * (r + 1.0) - 4.0 * r * lambda_coeff(model, math.sqrt(model.N * r), t)


def _simpson(f, a: float, b: float, n: int) -> float:
    s = np.linspace(a, b, n + 1)
    y = np.array([f(float(si)) for si in s])
    h = (b - a) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def _switch_window(model: GaussianVarModel, t: float, width: float = 40.0) -> tuple[float, float] | None:
    """Interval in r where the responsibilities change over.

    l1 - l2 = a - b r is linear in r, so the switch is a logistic step centred
    at a / b of width 1 / b; at large N it is far sharper than a uniform panel.
    """
    g1, g2 = model.gamma1(t), model.gamma2(t)
    b = 0.5 * model.N * (1.0 / g1 - 1.0 / g2)
    if not b > 0:
        return None
    centre = 0.5 * model.N * math.log(g2 / g1) / b
    return centre - width / b, centre + width / b


def potential_radial(model: GaussianVarModel, r: float, t: float, n_quad: int = 512) -> float:
    """V_t(r) = -int_0^r drift(s) ds by composite Simpson with ``n_quad`` panels.

    The range is split around the responsibility switch (see ``_switch_window``)
    and each piece gets ``n_quad`` panels, so the sharp step is resolved.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    if n_quad < 64:
        raise ValueError("n_quad must be at least 64")
    if r == 0:
        return 0.0
    n_quad += n_quad % 2
    cuts = [0.0, r]
    window = _switch_window(model, t)
    if window is not None:
        cuts += [c for c in window if 0.0 < c < r]
    cuts = sorted(cuts)

    def f(s):
        return radial_drift(model, s, t)

    return -float(sum(_simpson(f, a, b, n_quad) for a, b in zip(cuts, cuts[1:])))


def solve_curvature_time(model: GaussianVarModel, tol: float = 1e-6) -> float:
    """Time at which lambda(sqrt(N), t) = 1, i.e. the radial potential flattens at r = 1.

    Bisection on [0, log N]; lambda - 1 is negative at t = 0 and positive at
    large t.
    """
    if model.delta_param == 0:
        raise DegenerateModelError("delta = 0: both components coincide")
    root_n = math.sqrt(model.N)

    def g(t):
        return _lambda_minus_one(model, root_n, t)

    lo, hi = 0.0, max(math.log(model.N), 1.0)
    if not (g(lo) < 0 < g(hi)):
        raise DegenerateModelError(f"no sign change of lambda - 1 on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def closed_form_ts(n: int, delta_param: float) -> float:
    """Large-N curvature time (1/4) log N + (1/2) log delta - (1/4) log 3."""
    if not delta_param > 0 or n < 1:
        raise ValueError("need delta > 0 and N >= 1")
    return 0.25 * math.log(n) + 0.5 * math.log(delta_param) - 0.25 * math.log(3.0)


def gm_free_entropy_diff(model: GaussianVarModel, t: float) -> float:
    """Per-spin KL gap f_11 - f_21 between the diffused variance components."""
    rho = model.gamma1(t) / model.gamma2(t)
    return -0.5 * (math.log(rho) + 1.0 - rho)


def gm_variance(model: GaussianVarModel, t: float, n: int | None = None) -> float:
    """Variance of (1/N)(log P_1 - log P_2) under component 1."""
    n = model.N if n is None else n
    g1, g2 = model.gamma1(t), model.gamma2(t)
    return g1 * g1 * (1.0 / g1 - 1.0 / g2) ** 2 / (2.0 * n)


def solve_gm_criterion(model: GaussianVarModel, K: float = 1.0, tol: float = 1e-8) -> float:
    """Root of gm_free_entropy_diff = K sqrt(gm_variance) by bisection on [0, log N]."""
    if model.delta_param == 0:
        raise DegenerateModelError("delta = 0: both components coincide")

    def g(t):
        return gm_free_entropy_diff(model, t) - K * math.sqrt(gm_variance(model, t))

    lo, hi = 0.0, max(math.log(model.N), 1.0)
    if not (g(lo) > 0 > g(hi)):
        raise DegenerateModelError("criterion has no root on [0, log N]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
