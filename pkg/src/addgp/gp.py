"""Selective-rescaled squared-exponential GPs and their additive mixtures.

A component ``(L, A, B)`` contributes the covariance

    L**2 * exp(-A**2 * ||B * (x - x')||**2)

to the prior on ``f``; the observation model adds ``mu`` and Gaussian noise of
scale ``sigma``. Everything here conditions on the hyperparameters, so the
latent function is integrated out analytically.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

LOG_2PI = math.log(2.0 * math.pi)

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class NumericalError(RuntimeError):
    """Raised when a covariance matrix cannot be factorized even with jitter."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class InclusionVector:
    """Binary mask over ``p`` predictors, stored as sorted selected indices."""

    idx: tuple
    p: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.idx))
        object.__setattr__(self, "idx", idx)
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if len(idx) == 0:
            raise ValueError("an inclusion vector must select at least one predictor")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate indices in {idx}")
        if idx[0] < 0 or idx[-1] >= self.p:
            raise ValueError(f"indices {idx} out of range for p={self.p}")

    @classmethod
    def from_bits(cls, bits) -> "InclusionVector":
        bits = np.asarray(bits).astype(bool)
        return cls(tuple(np.flatnonzero(bits)), bits.size)

    @property
    def bits(self) -> np.ndarray:
        out = np.zeros(self.p, dtype=bool)
        out[list(self.idx)] = True
        return out

    @property
    def popcount(self) -> int:
        return len(self.idx)

    def __contains__(self, j) -> bool:
        return j in self.idx


@dataclass(frozen=True)
class ComponentHyper:
    L: float
    A: float
    B: InclusionVector

    def __post_init__(self):
        if not self.L >= 0:
            # L = 0 is tolerated so that a zero-magnitude component can be
            # used as a no-op; the prior itself has support on L > 0 only.
            raise ValueError(f"magnitude L must be nonnegative, got {self.L}")
        if not self.A > 0:
            raise ValueError(f"rescaling A must be positive, got {self.A}")


@dataclass(frozen=True)
class ModelState:
    """Full hyperparameter state of the additive GP model."""

    components: tuple
    mu: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise ValueError("a model state needs at least one component")
        ps = {c.B.p for c in self.components}
        if len(ps) != 1:
            raise ValueError(f"components disagree on p: {sorted(ps)}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def p(self) -> int:
        return self.components[0].B.p

    @property
    def prior_variance(self) -> float:
        return float(sum(c.L**2 for c in self.components))

    def replace_component(self, s: int, comp: ComponentHyper) -> "ModelState":
        comps = list(self.components)
        comps[s] = comp
        return ModelState(tuple(comps), self.mu, self.sigma)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "components": [
                {"L": c.L, "A": c.A, "B": list(c.B.idx)} for c in self.components
            ],
            "p": self.p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelState":
        p = int(d["p"])
        comps = tuple(
            ComponentHyper(float(c["L"]), float(c["A"]), InclusionVector(tuple(c["B"]), p))
            for c in d["components"]
        )
        return cls(comps, float(d["mu"]), float(d["sigma"]))


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    jitter: float = 0.0


def _check_design(X, p) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if X.size else X.reshape(0, p)
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"design has shape {X.shape}, expected (n, {p})")
    return X


def se_cov(x, x2, comp: ComponentHyper) -> float:
    """Selective-rescaled SE covariance between two points (unit magnitude)."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    p = comp.B.p
    if x.size != p or x2.size != p:
        raise ValueError(f"points of length {x.size}, {x2.size} do not match p={p}")
    idx = list(comp.B.idx)
    diff = x[idx] - x2[idx]
    return math.exp(-(comp.A**2) * float(diff @ diff))


def component_kernel(X1, X2, comp: ComponentHyper) -> np.ndarray:
    """Matrix of :func:`se_cov` values between the rows of ``X1`` and ``X2``."""
    p = comp.B.p
    X1 = _check_design(X1, p)
    X2 = _check_design(X2, p)
    idx = list(comp.B.idx)
    if X1.shape[0] == 0 or X2.shape[0] == 0:
        return np.zeros((X1.shape[0], X2.shape[0]))
    sq = cdist(X1[:, idx], X2[:, idx], "sqeuclidean")
    return np.exp(-(comp.A**2) * sq)


def gram(X, state: ModelState, include_noise: bool = True) -> GramMatrix:
    """Covariance of ``f(X)`` (plus noise when ``include_noise``) under ``state``."""
    X = _check_design(X, state.p)
    n = X.shape[0]
    K = np.zeros((n, n))
    for comp in state.components:
        if comp.L == 0.0:
            continue
        K += comp.L**2 * component_kernel(X, X, comp)
    if include_noise:
        K[np.diag_indices(n)] += state.sigma**2
    return GramMatrix(K, 0.0)


def cholesky_jittered(K: np.ndarray, scale: float, state=None):
    """Lower Cholesky factor of ``K``, adding diagonal jitter only on failure.

    Jitter starts at ``JITTER_START * scale`` and grows tenfold up to
    ``JITTER_MAX * scale``. Returns ``(factor, jitter)``.
    """
    n = K.shape[0]
    jitter = 0.0
    rel = JITTER_START
    while True:
        try:
            M = K if jitter == 0.0 else K + jitter * np.eye(n)
            L = sla.cholesky(M, lower=True, check_finite=False)
            if not np.all(np.isfinite(L)):
                raise np.linalg.LinAlgError("non-finite factor")
            return L, jitter
        except (np.linalg.LinAlgError, ValueError):
            if rel > JITTER_MAX * (1 + 1e-9):
                raise NumericalError(
                    f"Cholesky failed with jitter up to {JITTER_MAX:g} x {scale:g}", state
                ) from None
            jitter = rel * scale
            rel *= 10.0


def factor_gram(X, state: ModelState) -> tuple:
    """Jittered Cholesky factor of the noisy Gram plus the jitter used."""
    G = gram(X, state, include_noise=True)
    scale = state.prior_variance + state.sigma**2
    return cholesky_jittered(G.entries, scale, state)


def gaussian_stats(L: np.ndarray, y: np.ndarray) -> tuple:
    """Quadratic forms needed for the likelihood as a function of ``mu``.

    Returns ``(yy, one_y, one_one, logdet)`` with ``yy = y' S^-1 y`` etc., where
    ``S = L L'``.
    """
    ones = np.ones_like(y)
    wy = sla.solve_triangular(L, y, lower=True, check_finite=False)
    w1 = sla.solve_triangular(L, ones, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(wy @ wy), float(w1 @ wy), float(w1 @ w1), logdet


def loglik_from_stats(stats: tuple, mu: float, n: int) -> float:
    yy, one_y, one_one, logdet = stats
    quad = yy - 2.0 * mu * one_y + mu * mu * one_one
    return -0.5 * (quad + logdet + n * LOG_2PI)


def log_marginal_likelihood(y, X, state: ModelState) -> float:
    """Log density of ``y`` under ``N(mu 1, gram(X, state, noise))``."""
    X = _check_design(X, state.p)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if y.size != n:
        raise ValueError(f"y has {y.size} entries but X has {n} rows")
    if n == 0:
        return 0.0
    L, _ = factor_gram(X, state)
    r = sla.solve_triangular(L, y - state.mu, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (float(r @ r) + logdet + n * LOG_2PI)


def cross_kernel(Xstar, X, state: ModelState) -> np.ndarray:
    Ks = np.zeros((Xstar.shape[0], X.shape[0]))
    for comp in state.components:
        if comp.L == 0.0:
            continue
        Ks += comp.L**2 * component_kernel(Xstar, X, comp)
    return Ks


def predict(y, X, state: ModelState, Xstar) -> tuple:
    """Posterior predictive mean and variance of ``mu + f`` at ``Xstar``.

    The variance is that of the latent ``mu + f`` given ``mu`` (noise excluded).
    Negative variances from roundoff are clamped to zero with a warning.
    """
    X = _check_design(X, state.p)
    Xstar = _check_design(Xstar, state.p)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise ValueError(f"y has {y.size} entries but X has {X.shape[0]} rows")
    m = Xstar.shape[0]
    prior_var = state.prior_variance
    if X.shape[0] == 0:
        return np.full(m, state.mu), np.full(m, prior_var)
    L, _ = factor_gram(X, state)
    Ks = cross_kernel(Xstar, X, state)
    alpha = sla.cho_solve((L, True), y - state.mu, check_finite=False)
    mean = state.mu + Ks @ alpha
    V = sla.solve_triangular(L, Ks.T, lower=True, check_finite=False)
    var = prior_var - np.einsum("ij,ij->j", V, V)
    neg = var < 0
    if np.any(neg):
        warnings.warn(f"clamped {int(neg.sum())} negative predictive variances to 0")
        var[neg] = 0.0
    return mean, var


def make_state(components: Sequence[tuple], p: int, mu: float = 0.0, sigma: float = 1.0) -> ModelState:
    """Convenience constructor from ``(L, A, selected_indices)`` triples."""
    comps = tuple(ComponentHyper(float(L), float(A), InclusionVector(tuple(b), p)) for L, A, b in components)
    return ModelState(comps, float(mu), float(sigma))
