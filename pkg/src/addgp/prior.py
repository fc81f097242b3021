"""Prior densities and an ancestral sampler for the additive GP model.

Per component: ``L`` is folded Gaussian, ``B`` is a product of Bernoulli(1/p)
bits conditioned on ``1 <= |B| <= D0``, and ``A**|B|`` given ``B`` is
Gamma(a1, rate a2). The component count ``K`` is truncated geometric on
``1..K0``; ``mu`` is Gaussian and ``sigma`` uniform on a compact interval.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, xlog1py

from .gp import ComponentHyper, InclusionVector, ModelState


class PriorDomainError(ValueError):
    """A value lies outside the support of the prior."""


@dataclass(frozen=True)
class PriorConfig:
    p: int
    D0: int = 3
    K0: int = 5
    a1: float = 1.0
    a2: float = 1.0
    ell_scale: float = 1.0
    mu_sd: float = 10.0
    sigma_lo: float = 0.05
    sigma_hi: float = 5.0
    k_ratio: float = 0.5

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.D0 < 1 or self.K0 < 1:
            raise ValueError(f"D0 and K0 must be >= 1, got D0={self.D0}, K0={self.K0}")
        if not (self.a1 > 0 and self.a2 > 0):
            raise ValueError(f"a1, a2 must be positive, got {self.a1}, {self.a2}")
        if not (self.ell_scale > 0 and self.mu_sd > 0):
            raise ValueError("ell_scale and mu_sd must be positive")
        if not 0 < self.sigma_lo < self.sigma_hi:
            raise ValueError(f"need 0 < sigma_lo < sigma_hi, got {self.sigma_lo}, {self.sigma_hi}")
        if not 0 < self.k_ratio < 1:
            raise ValueError(f"k_ratio must lie in (0, 1), got {self.k_ratio}")

    @property
    def dmax(self) -> int:
        """Largest admissible ``|B|``."""
        return min(self.D0, self.p)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in kinds:
                raise KeyError(f"unknown prior key {k!r}")
            out[k] = int(v) if kinds[k] in ("int", int) else float(v)
        return cls(**out)


def _log_bernoulli_weight(p: int, d: int) -> float:
    # log[(1/p)^d (1 - 1/p)^(p-d)], with 0 * log 0 = 0 when p = 1
    return -d * math.log(p) + float(xlog1py(p - d, -1.0 / p))


@lru_cache(maxsize=256)
def _size_log_pmf(p: int, dmax: int) -> tuple:
    """Log pmf of ``|B|`` on ``1..dmax`` under the truncated Bernoulli product."""
    d = np.arange(1, dmax + 1)
    logw = np.array(
        [gammaln(p + 1) - gammaln(k + 1) - gammaln(p - k + 1) + _log_bernoulli_weight(p, k) for k in d]
    )
    logz = float(np.logaddexp.reduce(logw))
    return tuple(logw - logz), logz


def size_pmf(cfg: PriorConfig) -> np.ndarray:
    """Probabilities of ``|B| = 1, ..., dmax``."""
    logpmf, _ = _size_log_pmf(cfg.p, cfg.dmax)
    return np.exp(np.array(logpmf))


def log_prior_B(b: InclusionVector, cfg: PriorConfig) -> float:
    d = b.popcount
    if b.p != cfg.p:
        raise PriorDomainError(f"mask has p={b.p}, prior has p={cfg.p}")
    if not 1 <= d <= cfg.D0:
        raise PriorDomainError(f"|B|={d} outside [1, D0={cfg.D0}]")
    _, logz = _size_log_pmf(cfg.p, cfg.dmax)
    return _log_bernoulli_weight(cfg.p, d) - logz


def log_prior_A(a: float, d: int, cfg: PriorConfig) -> float:
    """Log density of ``A`` when ``A**d ~ Gamma(a1, rate=a2)``."""
    if not a > 0:
        raise PriorDomainError(f"A must be positive, got {a}")
    if d < 1:
        raise PriorDomainError(f"selected count must be >= 1, got {d}")
    a1, a2 = cfg.a1, cfg.a2
    loga = math.log(a)
    return (
        a1 * math.log(a2)
        - math.lgamma(a1)
        + (a1 - 1.0) * d * loga
        - a2 * math.exp(d * loga)
        + math.log(d)
        + (d - 1) * loga
    )


def log_prior_L(L: float, cfg: PriorConfig) -> float:
    if not L > 0:
        raise PriorDomainError(f"L must be positive, got {L}")
    s = cfg.ell_scale
    return math.log(2.0) - math.log(s) - 0.5 * math.log(2.0 * math.pi) - 0.5 * (L / s) ** 2


def log_prior_K(K: int, cfg: PriorConfig) -> float:
    if not 1 <= K <= cfg.K0:
        raise PriorDomainError(f"K={K} outside [1, K0={cfg.K0}]")
    r = cfg.k_ratio
    return (K - 1) * math.log(r) + math.log1p(-r) - math.log1p(-(r**cfg.K0))


def log_prior_mu(mu: float, cfg: PriorConfig) -> float:
    s = cfg.mu_sd
    return -0.5 * math.log(2.0 * math.pi) - math.log(s) - 0.5 * (mu / s) ** 2


def log_prior_sigma(sigma: float, cfg: PriorConfig) -> float:
    if not cfg.sigma_lo <= sigma <= cfg.sigma_hi:
        raise PriorDomainError(f"sigma={sigma} outside [{cfg.sigma_lo}, {cfg.sigma_hi}]")
    return -math.log(cfg.sigma_hi - cfg.sigma_lo)


def log_prior_component(comp: ComponentHyper, cfg: PriorConfig) -> float:
    return (
        log_prior_L(comp.L, cfg)
        + log_prior_B(comp.B, cfg)
        + log_prior_A(comp.A, comp.B.popcount, cfg)
    )


def log_prior_state(state: ModelState, cfg: PriorConfig) -> float:
    if state.p != cfg.p:
        raise PriorDomainError(f"state has p={state.p}, prior has p={cfg.p}")
    total = log_prior_K(state.K, cfg) + log_prior_mu(state.mu, cfg) + log_prior_sigma(state.sigma, cfg)
    for comp in state.components:
        total += log_prior_component(comp, cfg)
    return total


def k_pmf(cfg: PriorConfig) -> np.ndarray:
    """Probabilities of ``K = 1, ..., K0``."""
    return np.exp([log_prior_K(k, cfg) for k in range(1, cfg.K0 + 1)])


def prior_inclusion_probability(cfg: PriorConfig) -> float:
    """Prior probability that a given predictor is selected by some component."""
    q = float(np.dot(np.arange(1, cfg.dmax + 1), size_pmf(cfg))) / cfg.p
    ks = np.arange(1, cfg.K0 + 1)
    return float(1.0 - np.dot(k_pmf(cfg), (1.0 - q) ** ks))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def derive_seed(base_seed: int, *keys: int) -> int:
    """Independent 63-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence([int(base_seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_component(cfg: PriorConfig, rng) -> ComponentHyper:
    rng = as_generator(rng)
    d = int(rng.choice(np.arange(1, cfg.dmax + 1), p=size_pmf(cfg)))
    idx = rng.choice(cfg.p, size=d, replace=False)
    g = rng.gamma(cfg.a1, 1.0 / cfg.a2)
    # guard against g == 0 underflow for tiny shapes
    A = max(g, np.finfo(float).tiny) ** (1.0 / d)
    L = abs(rng.normal(0.0, cfg.ell_scale))
    if L == 0.0:
        L = np.finfo(float).tiny
    return ComponentHyper(float(L), float(A), InclusionVector(tuple(idx), cfg.p))


def sample_prior(cfg: PriorConfig, rng_seed) -> ModelState:
    """Ancestral draw of a full model state."""
    rng = as_generator(rng_seed)
    K = int(rng.choice(np.arange(1, cfg.K0 + 1), p=k_pmf(cfg)))
    comps = tuple(sample_component(cfg, rng) for _ in range(K))
    mu = float(rng.normal(0.0, cfg.mu_sd))
    sigma = float(rng.uniform(cfg.sigma_lo, cfg.sigma_hi))
    return ModelState(comps, mu, sigma)


def check_state(state: ModelState, cfg: PriorConfig) -> None:
    """Raise :class:`PriorDomainError` naming the first violated constraint."""
    log_prior_state(state, cfg)
