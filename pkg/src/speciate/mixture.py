"""Mixture containers shared by the Ising machinery and the speciation solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class IsingComponent:
    """Open 1D Ising chain at inverse temperature ``beta`` carrying mixture weight ``weight``."""

    beta: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not 0 < self.weight <= 1:
            raise ValueError(f"weight must lie in (0, 1], got {self.weight}")

    def log_z(self, n: int) -> float:
        """log of Z = 2 (2 cosh beta)^(N-1)."""
        return math.log(2.0) + (n - 1) * log_2cosh(self.beta)

    def log_z_per_spin(self, n: int) -> float:
        return self.log_z(n) / n

    def sample(self, n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        from speciate.ising import sample_chain

        return sample_chain(self.beta, n, rng, size=size)


def log_2cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x))


@dataclass(frozen=True)
class MixtureModel:
    """Weighted list of components, P(a) = sum_r w_r P_r(a)."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {total!r}")

    @classmethod
    def ising(cls, betas: Sequence[float], weights: Sequence[float] | None = None) -> "MixtureModel":
        betas = [float(b) for b in betas]
        if weights is None:
            weights = [1.0 / len(betas)] * len(betas)
        if len(weights) != len(betas):
            raise ValueError("betas and weights must have the same length")
        comps = [IsingComponent(b, float(w)) for b, w in zip(betas, weights)]
        # absorb the rounding of 1/R so that the sum check passes exactly
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) <= 1e-9:
            comps = [IsingComponent(c.beta, c.weight / total) for c in comps]
        return cls(tuple(comps))

    @property
    def R(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=np.float64)

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    @property
    def betas(self) -> np.ndarray:
        return np.array([c.beta for c in self.components], dtype=np.float64)

    def subset(self, idx: Sequence[int]) -> "MixtureModel":
        """Renormalized sub-mixture on the given component indices."""
        comps = [self.components[i] for i in idx]
        total = math.fsum(c.weight for c in comps)
        return MixtureModel(tuple(type(c)(c.beta, c.weight / total) for c in comps))
