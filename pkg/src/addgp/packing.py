"""Packing sets of Hölder balls built from compactly supported bumps.

The building block is the odd bump ``K0(t) = t exp(-1 / (1 - t^2))`` on
``(-1, 1)`` and its tensor product ``K``. Every axis marginal of ``K``
integrates to zero, so translated and rescaled copies of ``K`` on disjoint
cells give families of centered functions whose pairwise L2 distances are
exactly proportional to the square root of the Hamming distance between
their coefficient vectors.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .codes import vg_code
from .rates import log_binom

DEFAULT_RES = {1: 2048, 2: 256, 3: 64}


class PackingDomainError(ValueError):
    pass


def bump1d(t):
    """``t exp(-1/(1-t^2))`` on ``|t| < 1`` and 0 elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = ti * np.exp(-1.0 / (1.0 - ti * ti))
    return out if out.ndim else float(out)


def bump1d_deriv(t, order: int):
    """Analytic derivatives of :func:`bump1d` up to order 2."""
    if order == 0:
        return bump1d(t)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    u = 1.0 - ti * ti
    e = np.exp(-1.0 / u)
    phi1 = -2.0 * ti / u**2
    if order == 1:
        out[inside] = e * (1.0 + ti * phi1)
    elif order == 2:
        phi2 = -2.0 / u**2 - 8.0 * ti * ti / u**3
        out[inside] = e * (2.0 * phi1 + ti * phi1 * phi1 + ti * phi2)
    else:
        raise ValueError("only derivatives up to order 2 are available")
    return out if out.ndim else float(out)


def tensor_bump(x):
    """Product of :func:`bump1d` over the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return bump1d(x)
    return np.prod(bump1d(x), axis=-1)


def _tensor_deriv(orders, pts: np.ndarray) -> np.ndarray:
    out = np.ones(pts.shape[0])
    for j, k in enumerate(orders):
        out *= bump1d_deriv(pts[:, j], k)
    return out


def holder_floor(alpha: float) -> int:
    """Largest integer strictly smaller than ``alpha``."""
    return int(math.ceil(alpha)) - 1


def midpoint_grid(d: int, res: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """``(res**d, d)`` array of midpoint-rule nodes on ``[lo, hi]^d``."""
    t = lo + (np.arange(res) + 0.5) * (hi - lo) / res
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@lru_cache(maxsize=None)
def _sup_abs_deriv(order: int) -> float:
    t = np.linspace(-1.0, 1.0, 200_001)
    v = np.abs(bump1d_deriv(t, order))
    i = int(np.argmax(v))
    a, b = t[max(i - 1, 0)], t[min(i + 1, t.size - 1)]
    res = optimize.minimize_scalar(lambda s: -abs(bump1d_deriv(s, order)), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-13})
    return max(float(v[i]), -float(res.fun))


@lru_cache(maxsize=None)
def bump_l2_norm(d: int) -> float:
    """``||K||_2`` of the ``d``-fold tensor bump, by adaptive quadrature."""
    val, _ = integrate.quad(lambda t: bump1d(t) ** 2, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return val ** (d / 2.0)


def _multi_indices(d: int, order: int):
    return [k for k in itertools.product(range(order + 1), repeat=d) if sum(k) == order]


def _lipschitz_of(orders, d: int) -> float:
    """Euclidean Lipschitz constant of ``D^orders K`` = sup of its gradient norm."""
    grads = []
    for i in range(d):
        o = list(orders)
        o[i] += 1
        grads.append(tuple(o))
    if d == 1:
        return _sup_abs_deriv(grads[0][0])

    def gnorm(pts):
        return np.sqrt(sum(_tensor_deriv(g, pts) ** 2 for g in grads))

    res = {2: 801, 3: 121}[d]
    pts = midpoint_grid(d, res, -1.0, 1.0)
    vals = gnorm(pts)
    x0 = pts[int(np.argmax(vals))]
    opt = optimize.minimize(lambda x: -gnorm(x[None, :])[0], x0, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
    return max(float(vals.max()), -float(opt.fun))


def _holder_quotient_grid(orders, d: int, beta: float) -> float:
    res = {1: 3001, 2: 61, 3: 19}[d]
    pts = midpoint_grid(d, res, -1.0, 1.0)
    g = _tensor_deriv(orders, pts)
    best = 0.0
    for i in range(0, pts.shape[0], 512):
        diff = np.abs(g[i:i + 512, None] - g[None, :])
        dist = np.sqrt(((pts[i:i + 512, None, :] - pts[None, :, :]) ** 2).sum(-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, diff / dist**beta, 0.0)
        best = max(best, float(q.max()))
    return best


@lru_cache(maxsize=None)
def bump_holder_norm(alpha: float, d: int) -> float:
    """Numerical ``C^{alpha,d}`` norm of the tensor bump (``alpha <= 2``, ``d <= 3``)."""
    if not 0 < alpha <= 2:
        raise PackingDomainError(f"alpha={alpha} outside the supported range (0, 2]")
    if not 1 <= d <= 3:
        raise PackingDomainError(f"d={d} outside the supported range 1..3")
    fl = holder_floor(alpha)
    beta = alpha - fl
    sups = [_sup_abs_deriv(k) for k in range(fl + 1)]
    total = 0.0
    for order in range(fl + 1):
        for k in _multi_indices(d, order):
            total += math.prod(sups[j] for j in k)
    quot = 0.0
    for k in _multi_indices(d, fl):
        if beta == 1.0:
            quot = max(quot, _lipschitz_of(k, d))
        else:
            quot = max(quot, _holder_quotient_grid(k, d, beta))
    return total + quot


def estimate_holder_norm(fn, d: int, alpha: float, res: int | None = None) -> float:
    """Finite-difference estimate of ``||fn||_{C^alpha}`` on ``[0,1]^d`` (``d <= 2``).

    Derivatives are central differences on a uniform grid; the Hölder quotient
    of the top derivative is a pairwise maximum (Lipschitz case: largest
    difference quotient between neighbours).
    """
    if d not in (1, 2):
        raise ValueError("finite-difference estimate supports d in {1, 2}")
    fl = holder_floor(alpha)
    beta = alpha - fl
    if fl > 1:
        raise ValueError("alpha <= 2 only")
    res = res or (20001 if d == 1 else 401)
    t = np.linspace(0.0, 1.0, res)
    hstep = t[1] - t[0]
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], -1)
    g = np.asarray(fn(pts), dtype=float).reshape((res,) * d)
    total = float(np.abs(g).max())
    tops = [g]
    if fl == 1:
        grads = np.gradient(g, hstep) if d > 1 else [np.gradient(g, hstep)]
        total += sum(float(np.abs(gr).max()) for gr in grads)
        tops = list(grads)
    quot = 0.0
    for top in tops:
        if beta == 1.0:
            diffs = np.gradient(top, hstep) if d > 1 else [np.gradient(top, hstep)]
            gn = np.sqrt(sum(df**2 for df in diffs))
            quot = max(quot, float(gn.max()))
        elif d == 1:
            sub = top[:: max(1, res // 4000)]
            ts = t[:: max(1, res // 4000)]
            for i in range(sub.size - 1):
                q = np.abs(sub[i + 1:] - sub[i]) / (ts[i + 1:] - ts[i]) ** beta
                quot = max(quot, float(q.max()))
        else:
            step = max(1, res // 60)
            sub = top[::step, ::step].ravel()
            ts = t[::step]
            sp = np.stack([m.ravel() for m in np.meshgrid(ts, ts, indexing="ij")], -1)
            dist = np.sqrt(((sp[:, None] - sp[None]) ** 2).sum(-1))
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(dist > 0, np.abs(sub[:, None] - sub[None]) / dist**beta, 0.0)
            quot = max(quot, float(q.max()))
    return total + quot


@dataclass
class GridFunction:
    """Samples of a function on the midpoint grid of ``[0,1]^dim``."""

    dim: int
    grid_res: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.grid_res < 3:
            raise ValueError("grid_res must be >= 3")
        if self.values.shape != (self.grid_res,) * self.dim:
            raise ValueError(f"values shape {self.values.shape} does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @classmethod
    def sample(cls, fn, dim: int, grid_res: int | None = None) -> "GridFunction":
        grid_res = grid_res or DEFAULT_RES[dim]
        vals = np.asarray(fn(midpoint_grid(dim, grid_res)), dtype=float)
        return cls(dim, grid_res, vals.reshape((grid_res,) * dim))

    def inner(self, other: "GridFunction") -> float:
        return float(np.sum(self.values * other.values)) / self.values.size

    def l2_norm(self) -> float:
        return math.sqrt(self.inner(self))

    def distance(self, other: "GridFunction") -> float:
        diff = self.values - other.values
        return math.sqrt(float(np.sum(diff * diff)) / diff.size)

    def axis_marginals(self) -> list:
        """Integral over each axis; each returned array has one fewer dimension."""
        return [self.values.mean(axis=j) for j in range(self.dim)]


@dataclass
class BumpSum:
    """``scale * sum_k w_k K((x - c_k) / h)`` over the ``m^d`` cells of ``[0,1]^d``."""

    word: np.ndarray
    m: int
    d: int
    h: float
    scale: float

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cell = np.clip(np.floor(x * self.m).astype(int), 0, self.m - 1)
        centers = (cell + 0.5) / self.m
        k = np.ravel_multi_index(tuple(cell.T), (self.m,) * self.d)
        vals = tensor_bump((x - centers) / self.h)
        outside = np.any((x < 0) | (x > 1), axis=1)
        out = self.scale * self.word[k] * vals
        out[outside] = 0.0
        return out


@dataclass
class PackingSet:
    """Finite L2-separated family ``f_w``, one per code word ``w``.

    ``words[0]`` is the zero word, so member 0 is the zero function.
    ``eps`` is the separation certified by the construction.
    """

    alpha: float
    d: int
    m: int
    words: np.ndarray
    kernel_l2: float
    kernel_holder: float
    min_hamming: int
    eps: float
    norm: str = "L2"
    marginal_zero: bool = True
    requested_eps: float = float("nan")

    @property
    def h(self) -> float:
        return 1.0 / (2 * self.m)

    @property
    def M(self) -> int:
        return self.m**self.d

    @property
    def scale(self) -> float:
        return self.h**self.alpha / self.kernel_holder

    def __len__(self):
        return self.words.shape[0]

    @property
    def log_cardinality(self) -> float:
        """Log of the number of nonzero members."""
        return math.log(len(self) - 1)

    def centers(self) -> np.ndarray:
        return midpoint_grid(self.d, self.m)

    def member(self, i: int) -> BumpSum:
        return BumpSum(self.words[i].astype(float), self.m, self.d, self.h, self.scale)

    def grid_function(self, i: int, grid_res: int | None = None) -> GridFunction:
        return GridFunction.sample(self.member(i), self.d, grid_res)

    def predicted_distance(self, rho) -> np.ndarray:
        """Closed-form distance ``h^{alpha+d/2} ||K|| / ||K||_C * sqrt(rho)``."""
        c = self.h ** (self.alpha + self.d / 2.0) * self.kernel_l2 / self.kernel_holder
        return c * np.sqrt(np.asarray(rho, dtype=float))

    def hamming_matrix(self) -> np.ndarray:
        W = self.words.astype(np.int32)
        return W.sum(1)[:, None] + W.sum(1)[None, :] - 2 * W @ W.T

    def basis_gram(self, grid_res: int | None = None) -> np.ndarray:
        """Quadrature Gram matrix of the ``M`` cell bumps, evaluated densely."""
        grid_res = grid_res or DEFAULT_RES[self.d]
        pts = midpoint_grid(self.d, grid_res)
        Phi = np.empty((self.M, pts.shape[0]))
        for k, c in enumerate(self.centers()):
            Phi[k] = self.scale * tensor_bump((pts - c) / self.h)
        return Phi @ Phi.T / pts.shape[0]

    def sq_distance_matrix(self, grid_res: int | None = None) -> np.ndarray:
        G = self.basis_gram(grid_res)
        W = self.words.astype(float)
        Q = W @ G @ W.T
        q = np.diag(Q)
        D2 = q[:, None] + q[None, :] - 2.0 * Q
        np.fill_diagonal(D2, 0.0)
        return np.maximum(D2, 0.0)

    def verify(self, grid_res: int | None = None, max_pairs_members: int = 4096) -> dict:
        """Independent quadrature check of the separation.

        For up to ``max_pairs_members`` members every pair is checked against
        the closed form; beyond that the certificate uses the Gram diagonal and
        a bound on its off-diagonal mass.
        """
        G = self.basis_gram(grid_res)
        off = np.abs(G - np.diag(np.diag(G))).sum()
        if len(self) <= max_pairs_members:
            W = self.words.astype(float)
            Q = W @ G @ W.T
            q = np.diag(Q)
            D2 = np.maximum(q[:, None] + q[None, :] - 2.0 * Q, 0.0)
            iu = np.triu_indices(len(self), 1)
            dq = np.sqrt(D2[iu])
            rho = self.hamming_matrix()[iu]
            pred = self.predicted_distance(rho)
            rel = float(np.max(np.abs(dq - pred) / pred)) if dq.size else 0.0
            min_d = float(dq.min()) if dq.size else float("inf")
        else:
            min_d = math.sqrt(max(float(np.diag(G).min()) * self.min_hamming - off, 0.0))
            rel = float("nan")
        return {"min_distance": min_d, "max_rel_err": rel, "offdiag_mass": float(off),
                "certified": bool(min_d >= self.eps * (1 - 1e-6))}


def packing_constant(alpha: float, d: int) -> float:
    """``||K|| / (2^{(d+3)/2} ||K||_C)``: separation ``eps = const * h^alpha``."""
    return bump_l2_norm(d) / (2.0 ** ((d + 3) / 2.0) * bump_holder_norm(alpha, d))


def entropy_constant(alpha: float, d: int) -> float:
    """The construction's own ``M0`` in ``log N >= M0 (1/eps)^{d/alpha}``."""
    return packing_constant(alpha, d) ** (d / alpha) * math.log(2.0) / 2.0 ** (d + 3)


def max_feasible_eps(alpha: float, d: int) -> float:
    m_min = max(2, math.ceil(8 ** (1.0 / d) - 1e-12))
    return packing_constant(alpha, d) * (2 * m_min) ** (-alpha)


def holder_packing(alpha: float, d: int, eps: float, max_words: int | None = None, seed: int = 0) -> PackingSet:
    """``eps``-separated family in the unit ``C^{alpha,d}`` ball (L2 norm on ``[0,1]^d``).

    The bump width is ``h = 1/(2m)`` with ``m = floor(1/(2 h_eps))`` and
    ``h_eps = (eps / const)^{1/alpha}``, so cell supports are disjoint and the
    certified separation is at least ``eps``. By default the code keeps
    ``2^ceil(M/8) + 1`` words (zero word included).
    """
    if not eps > 0:
        raise PackingDomainError(f"eps must be positive, got {eps}")
    const = packing_constant(alpha, d)
    h_eps = (eps / const) ** (1.0 / alpha)
    m = int(math.floor(1.0 / (2.0 * h_eps) + 1e-9))
    if m < 2 or m**d < 8:
        raise PackingDomainError(
            f"eps={eps:g} is too large for alpha={alpha}, d={d}; "
            f"feasible eps must be <= {max_feasible_eps(alpha, d):.6g}"
        )
    M = m**d
    dmin = math.ceil(M / 8)
    if max_words is None:
        max_words = (1 << dmin) + 1
    code = vg_code(M, dmin, max_words=max_words, seed=seed)
    h = 1.0 / (2 * m)
    sep = h ** (alpha + d / 2.0) * bump_l2_norm(d) / bump_holder_norm(alpha, d) * math.sqrt(dmin)
    return PackingSet(
        alpha=alpha, d=d, m=m, words=code.words, kernel_l2=bump_l2_norm(d),
        kernel_holder=bump_holder_norm(alpha, d), min_hamming=dmin, eps=sep, requested_eps=eps,
    )


@dataclass
class LiftedMember:
    """``x -> f(x_b)``: a ``d``-variate function applied to the predictors in ``mask``."""

    base: object
    mask: tuple
    p: int

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.base(X[:, list(self.mask)])


@dataclass
class LiftedPacking:
    """Union over ``|b| = d`` masks of the nonzero base members lifted to ``p`` predictors."""

    base: PackingSet
    p: int
    d: int

    @property
    def eps(self) -> float:
        return self.base.eps

    def __len__(self):
        return math.comb(self.p, self.d) * (len(self.base) - 1)

    @property
    def log_cardinality(self) -> float:
        return log_binom(self.p, self.d) + math.log(len(self.base) - 1)

    def members(self):
        """Iterate ``(mask, base_index)`` pairs, masks in lexicographic order."""
        for mask in itertools.combinations(range(self.p), self.d):
            for i in range(1, len(self.base)):
                yield mask, i

    def member(self, mask, i: int) -> LiftedMember:
        if i < 1:
            raise IndexError("lifted members use nonzero base functions only")
        return LiftedMember(self.base.member(i), tuple(mask), self.p)


def sparse_lift(base: PackingSet, p: int, d: int | None = None) -> LiftedPacking:
    d = base.d if d is None else d
    if d != base.d:
        raise PackingDomainError(f"base is {base.d}-variate, cannot lift with d={d}")
    if d > p:
        raise PackingDomainError(f"d={d} exceeds p={p}")
    if not base.marginal_zero:
        raise PackingDomainError("base packing lacks the zero-marginal certificate")
    return LiftedPacking(base, p, d)


@dataclass
class Rescaled:
    """``x -> Delta^alpha_bar f((x - shift) / Delta)``; ``f`` is taken to vanish off ``[0,1]^d``."""

    base: object
    Delta: float
    alpha_bar: float
    shift: float

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = (X - self.shift) / self.Delta
        out = self.Delta**self.alpha_bar * np.asarray(self.base(np.clip(U, 0.0, 1.0)), dtype=float)
        out[np.any((U < 0) | (U > 1), axis=1)] = 0.0
        return out


def additive_rescale(members, Delta: float, alpha_bar: float, shift: float | None = None) -> list:
    """Shrink members onto a cube of side ``Delta`` centred at ``1/2``.

    The default shift ``(1 - Delta) / 2`` puts supports inside
    ``[1/2 - Delta/2, 1/2 + Delta/2]^d``; pairwise L2 distances shrink by
    exactly ``Delta^{alpha_bar + d/2}``.
    """
    if not 0 < Delta <= 1:
        raise PackingDomainError(f"Delta must lie in (0, 1], got {Delta}")
    shift = (1.0 - Delta) / 2.0 if shift is None else shift
    return [Rescaled(f, Delta, alpha_bar, shift) for f in members]
