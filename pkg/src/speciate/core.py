"""Diffusion schedules, forward noising and backward Euler-Maruyama integration.

The forward process is the Ornstein-Uhlenbeck process dx = -x dt + sqrt(2) dW,
whose transition kernel from a clean point ``a`` is N(a e^{-t}, (1 - e^{-2t}) I).
Backward integration runs the time-reversed SDE from ``t_start`` down to
``t_min`` with a user-provided score.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, TypeVar, runtime_checkable

import numpy as np

T = TypeVar("T")

DEFAULT_DT = 1e-3
DEFAULT_T_MIN = 1e-3


class IntegrationError(RuntimeError):
    """Raised when the score produces non-finite values during integration."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class Schedule:
    """Diffusion-time bundle.

    Attributes:
        t: diffusion time.
        decay: e^{-t}.
        delta: 1 - e^{-2t}, the variance of the noise added up to time t.
        gamma: e^{-t} / sqrt(delta); infinite at t = 0.
    """

    t: float
    decay: float
    delta: float
    gamma: float

    @property
    def degenerate(self) -> bool:
        return self.delta == 0.0

    @property
    def field_scale(self) -> float:
        """e^{-t}/delta, the factor mapping a noisy state to an external field."""
        self.require_nondegenerate()
        return self.decay / self.delta

    def require_nondegenerate(self) -> None:
        if self.degenerate:
            raise ValueError("operation undefined on the degenerate schedule t=0")


def make_schedule(t: float) -> Schedule:
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"diffusion time must be non-negative, got {t}")
    decay = math.exp(-t)
    delta = -math.expm1(-2.0 * t)
    gamma = math.inf if delta == 0.0 else decay / math.sqrt(delta)
    return Schedule(t=t, decay=decay, delta=delta, gamma=gamma)


def forward_diffuse(a: np.ndarray, t: float, rng: np.random.Generator) -> np.ndarray:
    """Sample x ~ N(a e^{-t}, delta_t I) for a clean point (or batch of points) ``a``."""
    sched = make_schedule(t)
    a = np.asarray(a, dtype=np.float64)
    z = rng.standard_normal(a.shape)
    return a * sched.decay + math.sqrt(sched.delta) * z


@runtime_checkable
class ScoreModel(Protocol):
    """Anything exposing ``dim`` and ``score(x, t)`` = grad_x log P_t(x)."""

    dim: int

    def score(self, x: np.ndarray, t: float) -> np.ndarray: ...


def integrate_backward(
    score: ScoreModel | Callable[[np.ndarray, float], np.ndarray],
    x_start: np.ndarray,
    t_start: float,
    t_min: float = DEFAULT_T_MIN,
    dt: float = DEFAULT_DT,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Euler-Maruyama integration of the reverse SDE from ``t_start`` down to ``t_min``.

    Each step evaluates the score at the current time and applies
    ``y <- y + (y + 2 S(y, t)) dt + sqrt(2 dt) xi`` before decreasing t by dt.
    The number of steps is ``round((t_start - t_min) / dt)``.

    Args:
        score: a ScoreModel or a plain callable ``(x, t) -> grad log P_t``.
        x_start: initial state at ``t_start``.
        t_start: starting diffusion time.
        t_min: final diffusion time.
        dt: step size.
        rng: source of the Brownian increments.

    Returns:
        The state at ``t_min``.
    """
    if not (t_start > t_min >= dt > 0):
        raise ValueError(f"need t_start > t_min >= dt > 0, got {t_start}, {t_min}, {dt}")
    if rng is None:
        raise ValueError("an explicit rng is required")
    fn = score.score if isinstance(score, ScoreModel) else score
    n_steps = int(round((t_start - t_min) / dt))
    y = np.array(x_start, dtype=np.float64, copy=True)
    noise_scale = math.sqrt(2.0 * dt)
    for step in range(n_steps):
        t = t_start - step * dt
        s = fn(y, t)
        if not np.all(np.isfinite(s)):
            raise IntegrationError("score returned non-finite values", step)
        y += (y + 2.0 * s) * dt
        y += noise_scale * rng.standard_normal(y.shape)
    return y


def derive_sample_rng(master_seed: int, sample_index: int, *stream: int) -> np.random.Generator:
    """Independent generator for one sample, a pure function of its key.

    ``stream`` carries extra key components (origin component, grid index, ...)
    so that different phases of an experiment never share a stream.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(sample_index), *map(int, stream)))
    return np.random.Generator(np.random.PCG64(seq))


def resolve_threads(threads: int) -> int:
    if threads <= 0:
        return os.cpu_count() or 1
    return threads


def map_samples(fn: Callable[[int], T], indices: Sequence[int] | int, threads: int = 1) -> list[T]:
    """Apply ``fn`` to every sample index and return results in index order.

    Results never depend on ``threads``: each call is expected to derive its own
    rng from its index, and the output order is fixed.
    """
    if isinstance(indices, int):
        indices = range(indices)
    threads = resolve_threads(threads)
    if threads == 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices))


@dataclass
class TrajectoryBatch:
    """Terminal states of a batch of trajectories together with their provenance."""

    states: np.ndarray
    t: float
    origin_labels: np.ndarray
    master_seed: int
    sample_indices: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        self.origin_labels = np.asarray(self.origin_labels, dtype=np.int64)
        if self.sample_indices is None:
            self.sample_indices = np.arange(len(self.states))
        if len(self.origin_labels) != len(self.states):
            raise ValueError("one origin label per state is required")
        if np.any(self.origin_labels < 0):
            raise ValueError("origin labels must be non-negative")
