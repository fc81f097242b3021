"""Minimax-rate and contraction-rate evaluators.

All outputs are rate *shapes*: the theory pins them down only up to
multiplicative constants, which are exposed as parameters defaulting to 1.
Logarithms of ratios ``p / x`` are evaluated as ``log(max(p / x, e))``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

PRE_ASYMPTOTIC_N = 30


class RateDomainError(ValueError):
    pass


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdditiveClassSpec:
    """Additive class: ``k`` components with dimensions ``d``, smoothness ``alpha``, magnitude ``lam``."""

    p: int
    d: tuple
    alpha: tuple
    lam: tuple
    dbar: int = 1

    def __post_init__(self):
        for name in ("d", "alpha", "lam"):
            v = getattr(self, name)
            object.__setattr__(self, name, tuple(v) if isinstance(v, (list, tuple, np.ndarray)) else (v,))
        object.__setattr__(self, "d", tuple(int(v) for v in self.d))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        k = len(self.d)
        if k < 1 or len(self.alpha) != k or len(self.lam) != k:
            raise RateDomainError("d, alpha and lam must be nonempty and of equal length")
        if min(self.d) < 1 or min(self.alpha) <= 0 or min(self.lam) <= 0 or self.dbar < 1:
            raise RateDomainError("need all d_s >= 1, alpha_s > 0, lam_s > 0 and dbar >= 1")
        if k * max(self.d) > self.p:
            raise RateDomainError(f"k * max(d) = {k * max(self.d)} exceeds p = {self.p}")

    @property
    def k(self) -> int:
        return len(self.d)

    @property
    def total_d(self) -> int:
        return sum(self.d)

    @classmethod
    def single(cls, p, d, alpha, lam=1.0) -> "AdditiveClassSpec":
        return cls(p, (d,), (alpha,), (lam,), 1)


@dataclass(frozen=True)
class RateBounds:
    lower: float
    upper: float
    n: float
    sigma: float
    estimation: float = float("nan")
    selection_lower: float = float("nan")
    selection_upper: float = float("nan")
    pre_asymptotic: bool = False

    def __post_init__(self):
        if self.lower > self.upper * (1 + 1e-12):
            raise AssertionError(f"lower {self.lower} exceeds upper {self.upper}")


@dataclass(frozen=True)
class ContractionRate:
    """Squared contraction rate; ``in_scope`` is False when the ``K0 log p`` proviso fails."""

    eps2: float
    n: float
    in_scope: bool = True
    inflated: float = float("nan")
    notes: tuple = field(default_factory=tuple)

    def __float__(self):
        return self.eps2


def guarded_log(ratio: float) -> float:
    return math.log(max(ratio, math.e))


def estimation_term(lam: float, alpha: float, d: int, n: float, sigma: float) -> float:
    """``lam**2 * (sqrt(n) lam / sigma) ** (-4 alpha / (2 alpha + d))``."""
    return lam**2 * (math.sqrt(n) * lam / sigma) ** (-4.0 * alpha / (2.0 * alpha + d))


def _check_n_sigma(n, sigma):
    if not n >= 1:
        raise RateDomainError(f"n must be >= 1, got {n}")
    if not sigma > 0:
        raise RateDomainError(f"sigma must be positive, got {sigma}")


def minimax_m3(spec: AdditiveClassSpec, n: float, sigma: float, c_lower: float = 1.0, c_upper: float = 1.0) -> RateBounds:
    """Lower and upper minimax-risk shapes for the additive class."""
    _check_n_sigma(n, sigma)
    if spec.total_d >= spec.p:
        raise RateDomainError(f"sum of d_s = {spec.total_d} must be below p = {spec.p}")
    est = sum(estimation_term(l, a, d, n, sigma) for l, a, d in zip(spec.lam, spec.alpha, spec.d))
    base = sigma**2 * spec.total_d / n
    sel_lo = base * guarded_log(spec.p / spec.total_d)
    sel_hi = base * guarded_log(spec.p / min(spec.d))
    return RateBounds(
        lower=c_lower * (est + sel_lo),
        upper=c_upper * (est + sel_hi),
        n=n,
        sigma=sigma,
        estimation=est,
        selection_lower=sel_lo,
        selection_upper=sel_hi,
        pre_asymptotic=n < PRE_ASYMPTOTIC_N,
    )


def sparse_minimax(lam: float, alpha: float, d: int, p: int, n: float, sigma: float) -> float:
    """Two-term risk for a single ``d``-sparse ``alpha``-smooth component."""
    _check_n_sigma(n, sigma)
    return estimation_term(lam, alpha, d, n, sigma) + sigma**2 * d / n * guarded_log(p / d)


def q_exponent(d: int, alpha: float) -> float:
    """Log-power exponent ``(1 + d) / (2 + d / alpha)`` of one component."""
    return (1.0 + d) / (2.0 + d / alpha)


def contraction_rate(spec: AdditiveClassSpec, n: float, sigma_star: float, K0: int | None = None, D0: int | None = None) -> ContractionRate:
    """Squared posterior contraction rate of the additive GP prior at a truth in ``spec``.

    ``inflated`` multiplies by the overall ``(log n) ** (1 + D0)`` factor when
    ``D0`` is given. With ``K0`` the ``K0 log p <= n eps^2`` proviso is
    checked and, if violated, the result is tagged out of scope.
    """
    _check_n_sigma(n, sigma_star)
    if spec.total_d >= spec.p:
        raise RateDomainError(f"sum of d_s = {spec.total_d} must be below p = {spec.p}")
    logn = math.log(n)
    eps2 = sum(
        estimation_term(l, a, d, n, sigma_star) * logn ** (2.0 * q_exponent(d, a))
        for l, a, d in zip(spec.lam, spec.alpha, spec.d)
    )
    eps2 += sigma_star**2 * spec.total_d * math.log(spec.p) / n
    notes = []
    in_scope = True
    if K0 is not None and K0 * math.log(spec.p) > n * eps2:
        in_scope = False
        notes.append("outside the guarantee's scope: K0 log p > n eps^2")
    if D0 is not None and max(spec.d) > D0:
        in_scope = False
        notes.append(f"outside the guarantee's scope: max d_s > D0={D0}")
    if n < PRE_ASYMPTOTIC_N:
        notes.append("pre-asymptotic n")
    inflated = eps2 * logn ** (1 + D0) if D0 is not None else float("nan")
    return ContractionRate(eps2, n, in_scope, inflated, tuple(notes))


def log_binom(p: int, d: int) -> float:
    return float(gammaln(p + 1) - gammaln(d + 1) - gammaln(p - d + 1))


def sparse_entropy_bounds(eps: float, p: int, d: int, alpha: float, lam: float, M0: float = 1.0, M1: float = 1.0, eps1: float | None = None) -> tuple:
    """Lower/upper packing-entropy shapes of the ``d``-sparse class at radius ``eps``."""
    if d > p:
        raise RateDomainError(f"d={d} exceeds p={p}")
    if eps1 is not None and eps >= eps1:
        raise RateDomainError(f"eps={eps} is outside the small-radius regime eps < {eps1}")
    power = (lam / eps) ** (d / alpha)
    lb = log_binom(p, d)
    return M0 * power + lb, M1 * power + lb


def sparse_delta2(lam: float, alpha: float, d: int, p: int, n: float, sigma: float) -> float:
    """Reference rate ``lam^2 (sqrt(n) lam / sigma)^(-4a/(2a+d)) + sigma^2 log C(p, d) / n``."""
    return estimation_term(lam, alpha, d, n, sigma) + sigma**2 * log_binom(p, d) / n


def solve_entropy_equation(entropy_fn: Callable[[float], float], n: float, sigma: float = 1.0, lo: float = 1e-8, hi: float = 1e4, rtol: float = 1e-9, max_expand: int = 60) -> float:
    """Radius where ``entropy_fn(eps) == n eps^2 / sigma^2``, by bisection on ``log eps``."""
    _check_n_sigma(n, sigma)

    def g(log_eps):
        eps = math.exp(log_eps)
        c = entropy_fn(eps)
        if not c > 0:
            raise RateDomainError(f"entropy must be positive, got {c} at eps={eps}")
        return math.log(c) - (math.log(n) + 2.0 * log_eps - 2.0 * math.log(sigma))

    a, b = math.log(lo), math.log(hi)
    ga, gb = g(a), g(b)
    for _ in range(max_expand):
        if ga > 0:
            break
        a -= math.log(10.0)
        ga = g(a)
    for _ in range(max_expand):
        if gb < 0:
            break
        b += math.log(10.0)
        gb = g(b)
    if not (ga > 0 > gb):
        raise BracketError(f"no sign change on eps in [{math.exp(a):g}, {math.exp(b):g}]")
    # g is decreasing; stop on the residual criterion or when the interval collapses
    for _ in range(400):
        m = 0.5 * (a + b)
        gm = g(m)
        if abs(math.expm1(gm)) <= rtol * 0.5 or b - a < 1e-15:
            return math.exp(m)
        if gm > 0:
            a = m
        else:
            b = m
    warnings.warn("bisection did not reach the requested tolerance")
    return math.exp(0.5 * (a + b))


def rate_table(spec: AdditiveClassSpec, n_grid: Sequence[float], p_grid: Sequence[int], sigma: float, K0: int | None = None, D0: int | None = None) -> list:
    """Rows of bounds over an ``(n, p)`` grid; used by the ``rates`` subcommand."""
    rows = []
    for p in p_grid:
        s = AdditiveClassSpec(int(p), spec.d, spec.alpha, spec.lam, spec.dbar)
        for n in n_grid:
            b = minimax_m3(s, n, sigma)
            cr = contraction_rate(s, n, sigma, K0=K0, D0=D0)
            m2 = sparse_minimax(max(s.lam), min(s.alpha), s.total_d, s.p, n, sigma)
            rows.append(
                {
                    "n": n,
                    "p": int(p),
                    "m3_estimation": b.estimation,
                    "m3_selection_lower": b.selection_lower,
                    "m3_selection_upper": b.selection_upper,
                    "m3_lower": b.lower,
                    "m3_upper": b.upper,
                    "m2_risk": m2,
                    "contraction": cr.eps2,
                    "in_scope": int(cr.in_scope),
                    "pre_asymptotic": int(b.pre_asymptotic),
                }
            )
    return rows
