"""Design laws for the predictors.

Two laws are supported, both with densities known in closed form: uniform on
``[0,1]^p`` and a product of identical Beta(a, b) marginals with ``a, b >= 1``
(bounded density). Each records ``q_bar`` (global density sup), and ``q_low``
(density inf over the central cube ``[1/2 - Delta, 1/2 + Delta]^p``).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

LAWS = ("uniform", "beta")


@dataclass(frozen=True)
class DesignSpec:
    p: int
    law: str = "uniform"
    beta_a: float = 1.0
    beta_b: float = 1.0
    Delta: float | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.law not in LAWS:
            raise ValueError(f"unknown design law {self.law!r}; choose from {LAWS}")
        if self.law == "beta" and not (self.beta_a >= 1 and self.beta_b >= 1):
            raise ValueError("beta design needs a, b >= 1 for a bounded density")
        if self.Delta is None:
            interior = self.law == "beta" and (self.beta_a > 1 or self.beta_b > 1)
            object.__setattr__(self, "Delta", 0.25 if interior else 0.5)
        if not 0 < self.Delta <= 0.5:
            raise ValueError(f"Delta must lie in (0, 1/2], got {self.Delta}")

    def _marginal(self):
        if self.law == "uniform":
            return stats.uniform(0.0, 1.0)
        return stats.beta(self.beta_a, self.beta_b)

    @property
    def q_bar(self) -> float:
        if self.law == "uniform":
            return 1.0
        a, b = self.beta_a, self.beta_b
        mode = 0.5 if a == b else (a - 1) / (a + b - 2) if a + b > 2 else 0.0
        return float(self._marginal().pdf(mode)) ** self.p

    @property
    def q_low(self) -> float:
        if self.law == "uniform":
            return 1.0
        # a unimodal density attains its inf over an interval at an endpoint
        lo, hi = 0.5 - self.Delta, 0.5 + self.Delta
        m = self._marginal()
        return float(min(m.pdf(lo), m.pdf(hi))) ** self.p

    def sample(self, n: int, rng) -> np.ndarray:
        if self.law == "uniform":
            return rng.random((n, self.p))
        return rng.beta(self.beta_a, self.beta_b, size=(n, self.p))

    def density(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.prod(self._marginal().pdf(X), axis=1)

    def to_dict(self) -> dict:
        return asdict(self)
