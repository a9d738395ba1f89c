"""U-turn experiments: diffuse forward, integrate back with the exact score, re-attribute."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from speciate.core import DEFAULT_DT, DEFAULT_T_MIN, derive_sample_rng, forward_diffuse, make_schedule, map_samples
from speciate.ising import component_log_evidence, integrate_backward_ising, sample_chain
from speciate.mixture import MixtureModel

STREAM_UTURN = 2


@dataclass
class AttributionMatrix:
    """Row r, column s: fraction of samples from component r attributed to s."""

    entries: np.ndarray
    t_uturn: float
    n_samples: int
    N: int
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if np.any(self.entries < 0) or np.any(self.entries > 1):
            raise ValueError("attribution entries must lie in [0, 1]")
        if not np.allclose(self.entries.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("attribution rows must sum to 1")

    @property
    def R(self) -> int:
        return self.entries.shape[0]

    def misattribution(self) -> np.ndarray:
        return 1.0 - np.diag(self.entries)


def uturn_label(
    mix: MixtureModel,
    r: int,
    index: int,
    t_uturn: float,
    n: int,
    master_seed: int,
    dt: float = DEFAULT_DT,
    t_min: float = DEFAULT_T_MIN,
) -> int:
    """Attributed component of one U-turn trajectory started from component ``r``.

    The sample's clean chain and forward noise depend only on (seed, index, r),
    so the same sample is reused at every U-turn time.
    """
    rng = derive_sample_rng(master_seed, index, r, STREAM_UTURN)
    a = sample_chain(mix.components[r].beta, n, rng)
    x = forward_diffuse(a, t_uturn, rng)
    b = integrate_backward_ising(mix, x, t_uturn, t_min, dt, rng)
    return int(np.argmax(component_log_evidence(mix, b, make_schedule(t_min))))


def uturn_labels(
    mix: MixtureModel,
    r: int,
    t_uturn: float,
    n_samples: int,
    n: int,
    master_seed: int,
    dt: float = DEFAULT_DT,
    t_min: float = DEFAULT_T_MIN,
    threads: int = 1,
) -> np.ndarray:
    if not t_uturn > t_min:
        raise ValueError("U-turn time must exceed t_min")
    labels = map_samples(lambda i: uturn_label(mix, r, i, t_uturn, n, master_seed, dt, t_min), n_samples, threads)
    return np.asarray(labels, dtype=np.int64)


def u_turn(
    mix: MixtureModel,
    t_uturn: float,
    n_samples: int,
    n: int,
    master_seed: int,
    dt: float = DEFAULT_DT,
    t_min: float = DEFAULT_T_MIN,
    threads: int = 1,
) -> AttributionMatrix:
    """Attribution matrix at U-turn time ``t_uturn`` with ``n_samples`` per origin."""
    counts = np.zeros((mix.R, mix.R), dtype=np.int64)
    for r in range(mix.R):
        labels = uturn_labels(mix, r, t_uturn, n_samples, n, master_seed, dt, t_min, threads)
        counts[r] = np.bincount(labels, minlength=mix.R)
    return AttributionMatrix(counts / n_samples, float(t_uturn), n_samples, n, counts)


@dataclass(frozen=True)
class MisattributionPoint:
    t: float
    fraction: float
    std_error: float


def misattribution_curve(
    mix: MixtureModel,
    r: int,
    t_grid: Sequence[float],
    n_samples: int,
    n: int,
    master_seed: int,
    dt: float = DEFAULT_DT,
    t_min: float = DEFAULT_T_MIN,
    threads: int = 1,
) -> list[MisattributionPoint]:
    """Fraction of U-turn samples from ``r`` attributed elsewhere, per grid time."""
    t_grid = [float(t) for t in t_grid]
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("time grid must be increasing")
    out = []
    for t in t_grid:
        labels = uturn_labels(mix, r, t, n_samples, n, master_seed, dt, t_min, threads)
        p = float(np.mean(labels != r))
        out.append(MisattributionPoint(t, p, math.sqrt(p * (1 - p) / n_samples)))
    return out


def pooled_misattribution(
    mix: MixtureModel,
    t: float,
    n_samples: int,
    n: int,
    master_seed: int,
    dt: float = DEFAULT_DT,
    t_min: float = DEFAULT_T_MIN,
    threads: int = 1,
) -> MisattributionPoint:
    """Misattribution fraction over ``n_samples`` U-turns split evenly across origins."""
    per = n_samples // mix.R
    wrong = 0
    for r in range(mix.R):
        wrong += int(np.sum(uturn_labels(mix, r, t, per, n, master_seed, dt, t_min, threads) != r))
    total = per * mix.R
    p = wrong / total
    return MisattributionPoint(float(t), p, math.sqrt(p * (1 - p) / total))
