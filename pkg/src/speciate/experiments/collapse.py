"""Large-N scaling collapse of misattribution curves against t / log N."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from speciate.core import DEFAULT_DT, DEFAULT_T_MIN
from speciate.experiments.uturn import pooled_misattribution
from speciate.mixture import MixtureModel


@dataclass
class CollapseTable:
    """Pooled misattribution per (N, t) and the collapse diagnostics.

    ``metric`` is the largest spread between curves on the common t / log N
    range; it is NaN and ``metric_defined`` False when fewer than two N are
    given or the scaled ranges do not overlap.
    """

    N_list: np.ndarray
    t_grid: np.ndarray
    fractions: np.ndarray
    std_errors: np.ndarray
    plateau: float
    metric: float
    metric_defined: bool
    crossing_t: np.ndarray
    spread_raw: float
    spread_scaled: float

    def scaled_grid(self, k: int) -> np.ndarray:
        return self.t_grid / math.log(self.N_list[k])


def first_crossing(t: np.ndarray, y: np.ndarray, level: float) -> float:
    """First t where y reaches ``level``, linearly interpolated; NaN if never."""
    above = np.flatnonzero(y >= level)
    if above.size == 0:
        return math.nan
    j = int(above[0])
    if j == 0:
        return float(t[0])
    y0, y1 = y[j - 1], y[j]
    return float(t[j - 1] + (level - y0) * (t[j] - t[j - 1]) / (y1 - y0))


def collapse_metric(x_curves: Sequence[np.ndarray], y_curves: Sequence[np.ndarray], points: int = 50) -> float:
    """Max over a shared x grid of (max - min) across the interpolated curves."""
    if len(x_curves) < 2:
        return math.nan
    lo = max(float(x[0]) for x in x_curves)
    hi = min(float(x[-1]) for x in x_curves)
    if not hi > lo:
        return math.nan
    grid = np.linspace(lo, hi, points)
    ys = np.array([np.interp(grid, x, y) for x, y in zip(x_curves, y_curves)])
    return float(np.max(ys.max(axis=0) - ys.min(axis=0)))


def relative_spread(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2 or not np.all(np.isfinite(v)):
        return math.nan
    return float((v.max() - v.min()) / abs(v.mean()))


def scaling_collapse(
    mix: MixtureModel,
    N_list: Sequence[int],
    t_grid: Sequence[float],
    n_samples: int,
    master_seed: int,
    dt: float = DEFAULT_DT,
    t_min: float = DEFAULT_T_MIN,
    threads: int = 1,
) -> CollapseTable:
    """Pooled misattribution curves for each N, compared on raw t and on t / log N.

    The crossing level is half the plateau 1 - sum(w^2) reached once all
    components are merged and attribution follows the weights.
    """
    N_list = np.asarray(N_list, dtype=np.int64)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    frac = np.empty((len(N_list), len(t_grid)))
    se = np.empty_like(frac)
    for k, n in enumerate(N_list):
        for j, t in enumerate(t_grid):
            pt = pooled_misattribution(mix, float(t), n_samples * mix.R, int(n), master_seed, dt, t_min, threads)
            frac[k, j], se[k, j] = pt.fraction, pt.std_error
    plateau = float(1.0 - np.sum(mix.weights**2))
    crossing = np.array([first_crossing(t_grid, frac[k], 0.5 * plateau) for k in range(len(N_list))])
    xs = [t_grid / math.log(n) for n in N_list]
    metric = collapse_metric(xs, list(frac))
    return CollapseTable(
        N_list=N_list,
        t_grid=t_grid,
        fractions=frac,
        std_errors=se,
        plateau=plateau,
        metric=metric,
        metric_defined=bool(np.isfinite(metric)),
        crossing_t=crossing,
        spread_raw=relative_spread(crossing),
        spread_scaled=relative_spread(crossing / np.log(N_list)),
    )
