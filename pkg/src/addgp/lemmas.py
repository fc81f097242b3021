"""Numerical checkers for three Hilbert-space facts used in the lower-bound proofs.

* :func:`overlap_bound_check`: ``||sum f_s||^2 <= max_s r_s * sum ||f_s||^2``
  where ``r_s`` counts the ``t`` with ``<f_s, f_t> != 0``.
* :func:`additive_packing_sample`: random product-packing construction of
  an additive packing from packings of mutually orthogonal subspaces.
* :func:`empirical_norm_check`: frequency of ``||f||_n >= 4 delta`` among
  ``||f||_Q <= delta`` versus the Bernstein bound ``2 N exp(-5 n delta^2 / 8)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import DesignSpec
from .packing import GridFunction, PackingSet

MAX_PAIR_CELLS = 20_000_000


@dataclass
class SeparableFunction:
    """``scale * prod_j factors[j](x_j)`` with each factor sampled on a midpoint grid."""

    factors: dict
    scale: float = 1.0

    @property
    def mask(self) -> tuple:
        return tuple(sorted(self.factors))

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], float(self.scale))
        for j, u in self.factors.items():
            u = np.asarray(u)
            k = np.clip((X[:, j] * u.size).astype(int), 0, u.size - 1)
            out *= u[k]
        return out


@dataclass
class OverlapReport:
    lhs: float
    rhs: float
    holds: bool
    r: np.ndarray
    gram: np.ndarray


def _separable_gram(funcs: list) -> np.ndarray:
    k = len(funcs)
    G = np.empty((k, k))
    means = [{j: float(np.mean(u)) for j, u in f.factors.items()} for f in funcs]
    for s in range(k):
        for t in range(s, k):
            fs, ft = funcs[s], funcs[t]
            val = fs.scale * ft.scale
            for j in set(fs.factors) | set(ft.factors):
                if j in fs.factors and j in ft.factors:
                    val *= float(np.mean(np.asarray(fs.factors[j]) * np.asarray(ft.factors[j])))
                elif j in fs.factors:
                    val *= means[s][j]
                else:
                    val *= means[t][j]
            G[s, t] = G[t, s] = val
    return G


def _embed(g: GridFunction, mask: tuple, union: tuple) -> np.ndarray:
    """Broadcast ``g`` (axes ordered by ``mask``) onto the axes ``union``."""
    order = sorted(range(len(mask)), key=lambda i: mask[i])
    vals = np.transpose(g.values, order)
    shape = [g.grid_res if j in mask else 1 for j in union]
    return vals.reshape(shape)


def _grid_gram(items: list) -> np.ndarray:
    k = len(items)
    res = {g.grid_res for g, _ in items}
    if len(res) != 1:
        raise ValueError("all grid functions must share grid_res")
    res = res.pop()
    G = np.empty((k, k))
    for s in range(k):
        for t in range(s, k):
            (gs, ms), (gt, mt) = items[s], items[t]
            union = tuple(sorted(set(ms) | set(mt)))
            if res ** len(union) > MAX_PAIR_CELLS:
                raise ValueError(f"grid of {res}^{len(union)} cells is too large; lower grid_res")
            a = _embed(gs, ms, union)
            b = _embed(gt, mt, union)
            G[s, t] = G[t, s] = float(np.mean(np.broadcast_to(a * b, (res,) * len(union))))
    return G


def overlap_bound_check(functions, tol: float = 1e-10) -> OverlapReport:
    """Check ``||sum f_s||^2 <= (max_s r_s) sum ||f_s||^2`` by quadrature.

    ``functions`` is a list of :class:`SeparableFunction` or of
    ``(GridFunction, mask)`` pairs, where ``mask`` lists the predictors the
    grid axes correspond to. Inner products below ``tol`` times the product
    of norms are treated as zero when counting ``r_s``.
    """
    if len(functions) == 0:
        raise ValueError("need at least one function")
    if all(isinstance(f, SeparableFunction) for f in functions):
        G = _separable_gram(list(functions))
    else:
        items = []
        for f in functions:
            g, mask = f
            mask = tuple(int(j) for j in mask)
            if g.dim != len(mask) or len(set(mask)) != len(mask):
                raise ValueError(f"mask {mask} does not match a {g.dim}-dimensional grid function")
            items.append((g, mask))
        G = _grid_gram(items)
    norms = np.sqrt(np.clip(np.diag(G), 0.0, None))
    nonzero = np.abs(G) > tol * np.maximum(np.outer(norms, norms), 1e-300)
    np.fill_diagonal(nonzero, np.diag(G) > 0)
    r = nonzero.sum(axis=1)
    lhs = float(G.sum())
    rhs = float(max(r.max(), 1) * np.trace(G))
    holds = lhs <= rhs + tol * max(1.0, abs(rhs))
    return OverlapReport(lhs, rhs, bool(holds), r, G)


@dataclass
class ComponentPacking:
    """Finite packing of one orthogonal summand, described by its squared distances."""

    sq_dist: np.ndarray
    delta: float

    @classmethod
    def from_packing_set(cls, P: PackingSet, grid_res: int | None = None) -> "ComponentPacking":
        return cls(P.sq_distance_matrix(grid_res), P.eps)

    @property
    def size(self) -> int:
        return self.sq_dist.shape[0]

    @property
    def log_size(self) -> float:
        return math.log(self.size)


@dataclass
class AdditivePackingResult:
    success: bool
    family: np.ndarray  # (M, k) member indices, one column per component
    attempts: int
    target: float
    min_distance: float
    M: int
    violations: list = field(default_factory=list)


def lemma_exponent(deltas, log_sizes, c: float) -> float:
    """``(1 - c^2)/C* * sum C_s - k log 2``; admissible ``M`` satisfy ``2 log M`` below it."""
    deltas = np.asarray(deltas, float)
    C = np.asarray(log_sizes, float)
    ratio = C / deltas**2
    cstar = float(ratio.max() / ratio.min())
    return (1.0 - c * c) / cstar * float(C.sum()) - len(C) * math.log(2.0)


def lemma_max_M(deltas, log_sizes, c: float) -> int:
    X = lemma_exponent(deltas, log_sizes, c)
    if X <= 0:
        return 0
    M = int(math.floor(math.exp(X / 2.0)))
    while M > 0 and 2.0 * math.log(M) >= X:
        M -= 1
    return M


def additive_packing_sample(delta, c: float, component_packings: list, M: int | None = None, seed: int = 0,
                            max_attempts: int = 100) -> AdditivePackingResult:
    """Draw ``M`` IID tuples of component members until all sums are ``c ||delta||`` apart.

    Components are assumed mutually orthogonal, so the squared distance of two
    sums is the sum of componentwise squared distances. With a single
    component the draw is without replacement.
    """
    delta = np.asarray(delta, float)
    k = len(component_packings)
    if delta.shape != (k,):
        raise ValueError("delta must have one entry per component")
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    sizes = [cp.size for cp in component_packings]
    if k == 1:
        bound = sizes[0]
    else:
        bound = lemma_max_M(delta, [cp.log_size for cp in component_packings], c)
    if M is None:
        M = bound
    if M < 1 or M > bound:
        raise ValueError(f"M={M} outside the admissible range 1..{bound}")
    target = c * float(np.linalg.norm(delta))
    rng = np.random.default_rng(seed)
    violations = []
    fam = np.zeros((M, k), dtype=int)
    min_d = float("inf")
    for attempt in range(1, max_attempts + 1):
        if k == 1:
            fam = rng.choice(sizes[0], size=M, replace=False)[:, None]
        else:
            fam = np.column_stack([rng.integers(0, s, size=M) for s in sizes])
        D2 = np.zeros((M, M))
        for s, cp in enumerate(component_packings):
            D2 += cp.sq_dist[np.ix_(fam[:, s], fam[:, s])]
        iu = np.triu_indices(M, 1)
        d = np.sqrt(D2[iu])
        min_d = float(d.min()) if d.size else float("inf")
        bad = int(np.sum(d < target))
        if bad == 0:
            return AdditivePackingResult(True, fam, attempt, target, min_d, M, violations)
        violations.append(bad)
    return AdditivePackingResult(False, fam, max_attempts, target, min_d, M, violations)


@dataclass
class NormCheckReport:
    frequency: float
    mc_std_err: float
    bound: float
    n_mc: int
    n_small: int
    passed: bool
    q_norms: np.ndarray


def empirical_norm_check(functions, design: DesignSpec, n: int, delta: float, n_mc: int = 1000, seed: int = 0,
                         n_q: int = 200_000, chunk: int = 2_000_000) -> NormCheckReport:
    """Monte Carlo frequency of ``sup {||f||_n : ||f||_Q <= delta} >= 4 delta``.

    ``||f||_Q`` is estimated from ``n_q`` independent design draws, which also
    serve to check the ``sup |f| <= 1`` precondition.
    """
    rng = np.random.default_rng(seed)
    Xq = design.sample(n_q, rng)
    vals = [np.asarray(f(Xq), float) for f in functions]
    if any(np.max(np.abs(v), initial=0.0) > 1.0 + 1e-12 for v in vals):
        raise ValueError("every function must satisfy sup |f| <= 1")
    qn = np.array([math.sqrt(float(np.mean(v * v))) for v in vals])
    small = [f for f, q in zip(functions, qn) if q <= delta]
    N = len(functions)
    bound = min(1.0, 2.0 * N * math.exp(-5.0 * n * delta * delta / 8.0))
    hits = 0
    if small:
        per = max(1, chunk // (n * design.p))
        done = 0
        while done < n_mc:
            b = min(per, n_mc - done)
            X = design.sample(b * n, rng)
            sq = np.stack([np.asarray(f(X), float).reshape(b, n) ** 2 for f in small]).mean(axis=2)
            hits += int(np.sum(np.sqrt(sq.max(axis=0)) >= 4.0 * delta))
            done += b
    freq = hits / n_mc
    se = math.sqrt(freq * (1.0 - freq) / n_mc)
    return NormCheckReport(freq, se, bound, n_mc, len(small), freq <= bound + 3.0 * se, qn)
