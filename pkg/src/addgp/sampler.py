"""Reversible-jump Metropolis-within-Gibbs sampler over model states.

The latent function is integrated out, so every move targets

    log p(y | state) + log prior(state).

Birth proposals draw the new component from its prior, which makes the
dimension-matching Jacobian 1 and cancels the component prior in the ratio.
Death picks a component uniformly. Mask moves flip one predictor of one
component (add, remove, or swap when at a size bound) and are symmetric.
``A`` and ``L`` take log-scale random walks; ``mu`` is drawn from its
conditional Gaussian; ``sigma`` takes a random walk reflected into its
prior support.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, fmt
from .gp import (
    ComponentHyper,
    InclusionVector,
    ModelState,
    NumericalError,
    cholesky_jittered,
    gaussian_stats,
    loglik_from_stats,
    predict,
)
from .prior import (
    PriorConfig,
    as_generator,
    log_prior_A,
    log_prior_K,
    log_prior_L,
    log_prior_state,
    sample_component,
    sample_prior,
)

log = logging.getLogger(__name__)

MOVES = ("birth", "death", "flip", "A", "L", "mu", "sigma")


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 4000
    n_burn: int = 1000
    thin: int = 5
    # probabilities in MOVES order; all zeros freezes the chain
    move_probs: tuple = (0.1, 0.1, 0.2, 0.2, 0.15, 0.1, 0.15)
    # random-walk scales for log A, log L and sigma
    rw_scales: tuple = (1.0, 0.8, 0.05)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "move_probs", tuple(float(v) for v in self.move_probs))
        object.__setattr__(self, "rw_scales", tuple(float(v) for v in self.rw_scales))
        if len(self.move_probs) != len(MOVES):
            raise ValueError(f"move_probs needs {len(MOVES)} entries, got {len(self.move_probs)}")
        if any(v < 0 for v in self.move_probs):
            raise ValueError("move_probs must be nonnegative")
        total = sum(self.move_probs)
        if total != 0 and abs(total - 1.0) > 1e-9:
            raise ValueError(f"move_probs must sum to 1 (or all be 0), got {total}")
        if len(self.rw_scales) != 3 or any(s <= 0 for s in self.rw_scales):
            raise ValueError("rw_scales needs three positive entries")
        if self.n_iter < 1 or self.thin < 1 or not 0 <= self.n_burn < self.n_iter:
            raise ValueError(
                f"need n_iter >= 1, thin >= 1, 0 <= n_burn < n_iter; got "
                f"{self.n_iter}, {self.thin}, {self.n_burn}"
            )

    @property
    def n_kept(self) -> int:
        return -(-(self.n_iter - self.n_burn) // self.thin)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["move_probs"] = list(self.move_probs)
        d["rw_scales"] = list(self.rw_scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        for k in ("n_iter", "n_burn", "thin", "seed"):
            if k in d:
                d[k] = int(d[k])
        return cls(**d)


@dataclass
class ChainRecord:
    states: list
    log_posts: np.ndarray
    acceptance: dict
    seed: int
    sampler_cfg: dict
    prior_cfg: dict
    iterations: list = field(default_factory=list)
    failures: int = 0

    def __len__(self):
        return len(self.states)

    def acceptance_rates(self) -> dict:
        return {m: (a / n if n else float("nan")) for m, (n, a) in self.acceptance.items()}

    def to_files(self, directory, stem: str = "chain") -> tuple:
        """Write ``<stem>.json`` (metadata and states) and ``<stem>.csv`` (scalars)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "seed": self.seed,
            "sampler": self.sampler_cfg,
            "prior": self.prior_cfg,
            "acceptance": {m: list(v) for m, v in self.acceptance.items()},
            "failures": self.failures,
            "iterations": list(self.iterations),
            "states": [s.to_dict() for s in self.states],
        }
        jpath = directory / f"{stem}.json"
        jpath.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        cpath = directory / f"{stem}.csv"
        p = self.prior_cfg["p"]
        with open(cpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["iteration", "log_post", "K", "sigma", "mu"] + [f"incl{j + 1}" for j in range(p)])
            for it, lp, s in zip(self.iterations, self.log_posts, self.states):
                flags = np.zeros(p, dtype=int)
                for c in s.components:
                    flags[list(c.B.idx)] = 1
                w.writerow([it, fmt(lp), s.K, fmt(s.sigma), fmt(s.mu)] + [int(f) for f in flags])
        return jpath, cpath

    @classmethod
    def from_json(cls, path) -> "ChainRecord":
        meta = json.loads(Path(path).read_text(encoding="utf-8"))
        states = [ModelState.from_dict(s) for s in meta["states"]]
        csv_path = Path(path).with_suffix(".csv")
        log_posts = np.full(len(states), np.nan)
        if csv_path.exists():
            with open(csv_path, newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            log_posts = np.array([float(r["log_post"]) for r in rows])
        return cls(
            states=states,
            log_posts=log_posts,
            acceptance={m: tuple(v) for m, v in meta["acceptance"].items()},
            seed=meta["seed"],
            sampler_cfg=meta["sampler"],
            prior_cfg=meta["prior"],
            iterations=meta["iterations"],
            failures=meta.get("failures", 0),
        )


def _reflect(x: float, lo: float, hi: float) -> float:
    width = hi - lo
    t = (x - lo) % (2.0 * width)
    return lo + (t if t <= width else 2.0 * width - t)


def propose_mask(b: InclusionVector, D0: int, rng) -> InclusionVector | None:
    """Symmetric single-predictor move on a constrained mask.

    Pick a predictor uniformly. Add it if unselected and ``|b| < D0``; drop it
    if selected and ``|b| > 1``; otherwise swap it with a uniformly chosen
    predictor of the opposite status. Returns None when no move exists.
    """
    p = b.p
    dmax = min(D0, p)
    j = int(rng.integers(p))
    sel = set(b.idx)
    if j not in sel and len(sel) < dmax:
        return InclusionVector(tuple(sel | {j}), p)
    if j in sel and len(sel) > 1:
        return InclusionVector(tuple(sel - {j}), p)
    if j in sel:
        others = [i for i in range(p) if i not in sel]
        if not others:
            return None
        k = others[int(rng.integers(len(others)))]
        return InclusionVector(tuple((sel - {j}) | {k}), p)
    inside = sorted(sel)
    k = inside[int(rng.integers(len(inside)))]
    return InclusionVector(tuple((sel - {k}) | {j}), p)


class _DistanceCache:
    """Per-predictor squared-difference matrices, computed on demand."""

    def __init__(self, X: np.ndarray, max_bytes: float = 4e8):
        self.X = X
        n = X.shape[0]
        self.limit = max(1, int(max_bytes // max(8 * n * n, 1)))
        self._store: dict = {}

    def coord(self, j: int) -> np.ndarray:
        D = self._store.get(j)
        if D is None:
            x = self.X[:, j]
            D = np.subtract.outer(x, x)
            D *= D
            if len(self._store) >= self.limit:
                self._store.pop(next(iter(self._store)))
            self._store[j] = D
        return D

    def mask(self, b: InclusionVector) -> np.ndarray:
        idx = b.idx
        D = self.coord(idx[0]).copy()
        for j in idx[1:]:
            D += self.coord(j)
        return D


class _Likelihood:
    """Marginal likelihood over cached unit kernels ``exp(-A^2 D_b)``."""

    def __init__(self, data: Dataset):
        self.X = data.X
        self.y = data.y
        self.n = data.n
        self.dist = _DistanceCache(self.X) if self.n else None

    def distances(self, b: InclusionVector):
        return self.dist.mask(b) if self.n else None

    def kernel(self, A: float, D):
        return None if D is None else np.exp(-(A * A) * D)

    def stats(self, comps, kernels, sigma):
        if self.n == 0:
            return None
        S = np.zeros((self.n, self.n))
        for c, Ks in zip(comps, kernels):
            S += (c.L * c.L) * Ks
        S[np.diag_indices(self.n)] += sigma * sigma
        scale = sum(c.L * c.L for c in comps) + sigma * sigma
        Lf, _ = cholesky_jittered(S, scale)
        return gaussian_stats(Lf, self.y)

    def loglik(self, stats, mu):
        return 0.0 if stats is None else loglik_from_stats(stats, mu, self.n)


class _Chain:
    def __init__(self, data: Dataset, prior: PriorConfig, cfg: SamplerConfig, state: ModelState, rng):
        self.lik = _Likelihood(data)
        self.prior = prior
        self.cfg = cfg
        self.rng = rng
        self.comps = list(state.components)
        self.mu = state.mu
        self.sigma = state.sigma
        self.dists = [self.lik.distances(c.B) for c in self.comps]
        self.kernels = [self.lik.kernel(c.A, D) for c, D in zip(self.comps, self.dists)]
        self.stats = self.lik.stats(self.comps, self.kernels, self.sigma)
        self.ll = self.lik.loglik(self.stats, self.mu)
        probs = np.array(cfg.move_probs)
        self.frozen = probs.sum() == 0
        self.cum = np.cumsum(probs)
        self.accept = {m: [0, 0] for m in MOVES}
        self.failures = 0
        pb, pd = cfg.move_probs[0], cfg.move_probs[1]
        self.log_pd_over_pb = math.log(pd / pb) if pb > 0 and pd > 0 else -math.inf

    @property
    def state(self) -> ModelState:
        return ModelState(tuple(self.comps), self.mu, self.sigma)

    def _mh(self, log_ratio: float) -> bool:
        return log_ratio >= 0 or math.log(self.rng.random()) < log_ratio

    def _try(self, move, comps, dists, kernels, sigma, log_extra):
        """Evaluate a proposal and accept or reject it."""
        self.accept[move][0] += 1
        try:
            stats = self.lik.stats(comps, kernels, sigma)
        except NumericalError as exc:
            self.failures += 1
            log.debug("move %s auto-rejected: %s", move, exc)
            return False
        ll = self.lik.loglik(stats, self.mu)
        if not math.isfinite(ll):
            self.failures += 1
            return False
        if self._mh(ll - self.ll + log_extra):
            self.comps, self.dists, self.kernels = comps, dists, kernels
            self.sigma, self.stats, self.ll = sigma, stats, ll
            self.accept[move][1] += 1
            return True
        return False

    def step(self):
        if self.frozen:
            return
        move = MOVES[int(np.searchsorted(self.cum, self.rng.random() * self.cum[-1], side="right"))]
        getattr(self, f"_move_{move}")()

    def _move_birth(self):
        K = len(self.comps)
        if K >= self.prior.K0 or self.log_pd_over_pb == -math.inf:
            self.accept["birth"][0] += 1
            return
        new = sample_component(self.prior, self.rng)
        pos = int(self.rng.integers(K + 1))
        D = self.lik.distances(new.B)
        comps = self.comps[:pos] + [new] + self.comps[pos:]
        dists = self.dists[:pos] + [D] + self.dists[pos:]
        kernels = self.kernels[:pos] + [self.lik.kernel(new.A, D)] + self.kernels[pos:]
        extra = log_prior_K(K + 1, self.prior) - log_prior_K(K, self.prior) + self.log_pd_over_pb
        self._try("birth", comps, dists, kernels, self.sigma, extra)

    def _move_death(self):
        K = len(self.comps)
        if K <= 1 or self.log_pd_over_pb == -math.inf:
            self.accept["death"][0] += 1
            return
        s = int(self.rng.integers(K))
        comps = self.comps[:s] + self.comps[s + 1:]
        dists = self.dists[:s] + self.dists[s + 1:]
        kernels = self.kernels[:s] + self.kernels[s + 1:]
        extra = log_prior_K(K - 1, self.prior) - log_prior_K(K, self.prior) - self.log_pd_over_pb
        self._try("death", comps, dists, kernels, self.sigma, extra)

    def _replace(self, s, comp, D, Ks):
        comps, dists, kernels = list(self.comps), list(self.dists), list(self.kernels)
        comps[s], dists[s], kernels[s] = comp, D, Ks
        return comps, dists, kernels

    def _move_flip(self):
        s = int(self.rng.integers(len(self.comps)))
        c = self.comps[s]
        b = propose_mask(c.B, self.prior.D0, self.rng)
        if b is None:
            self.accept["flip"][0] += 1
            return
        new = ComponentHyper(c.L, c.A, b)
        D = self.lik.distances(b)
        # B prior depends on |B| only; A prior depends on |B| through A**|B|
        extra = (
            (b.popcount - c.B.popcount) * self._log_bit_ratio()
            + log_prior_A(c.A, b.popcount, self.prior)
            - log_prior_A(c.A, c.B.popcount, self.prior)
        )
        self._try("flip", *self._replace(s, new, D, self.lik.kernel(c.A, D)), self.sigma, extra)

    def _log_bit_ratio(self) -> float:
        p = self.prior.p
        return -math.inf if p == 1 else math.log(1.0 / p) - math.log1p(-1.0 / p)

    def _move_A(self):
        s = int(self.rng.integers(len(self.comps)))
        c = self.comps[s]
        A = c.A * math.exp(self.cfg.rw_scales[0] * self.rng.standard_normal())
        if not (A > 0 and math.isfinite(A)):
            self.accept["A"][0] += 1
            return
        d = c.B.popcount
        extra = log_prior_A(A, d, self.prior) - log_prior_A(c.A, d, self.prior) + math.log(A / c.A)
        new = ComponentHyper(c.L, A, c.B)
        self._try("A", *self._replace(s, new, self.dists[s], self.lik.kernel(A, self.dists[s])), self.sigma, extra)

    def _move_L(self):
        s = int(self.rng.integers(len(self.comps)))
        c = self.comps[s]
        L = c.L * math.exp(self.cfg.rw_scales[1] * self.rng.standard_normal())
        if not (L > 0 and math.isfinite(L)):
            self.accept["L"][0] += 1
            return
        extra = log_prior_L(L, self.prior) - log_prior_L(c.L, self.prior) + math.log(L / c.L)
        new = ComponentHyper(L, c.A, c.B)
        self._try("L", *self._replace(s, new, self.dists[s], self.kernels[s]), self.sigma, extra)

    def _move_mu(self):
        self.accept["mu"][0] += 1
        prec0 = 1.0 / self.prior.mu_sd**2
        if self.stats is None:
            prec, mean = prec0, 0.0
        else:
            _, one_y, one_one, _ = self.stats
            prec = one_one + prec0
            mean = one_y / prec
        self.mu = mean + self.rng.standard_normal() / math.sqrt(prec)
        self.ll = self.lik.loglik(self.stats, self.mu)
        self.accept["mu"][1] += 1

    def _move_sigma(self):
        lo, hi = self.prior.sigma_lo, self.prior.sigma_hi
        sigma = _reflect(self.sigma + self.cfg.rw_scales[2] * self.rng.standard_normal(), lo, hi)
        self._try("sigma", self.comps, self.dists, self.kernels, sigma, 0.0)


def _as_dataset(data, p=None) -> Dataset:
    if isinstance(data, Dataset):
        return data
    X, y = data
    return Dataset(X, y)


def initial_state(data: Dataset, prior: PriorConfig, rng) -> ModelState:
    """Prior draw, with ``mu`` and ``sigma`` moved to data-based values when n > 0."""
    state = sample_prior(prior, rng)
    if data.n == 0:
        return state
    sd = float(np.std(data.y)) if data.n > 1 else 1.0
    sigma = min(max(0.5 * sd, prior.sigma_lo), prior.sigma_hi)
    return ModelState(state.components, float(np.mean(data.y)), sigma)


def step(state: ModelState, data, prior: PriorConfig, cfg: SamplerConfig, rng) -> ModelState:
    """One Metropolis-Hastings transition from ``state``."""
    chain = _Chain(_as_dataset(data), prior, cfg, state, as_generator(rng))
    chain.step()
    return chain.state


def run_chain(data, prior_cfg: PriorConfig, sampler_cfg: SamplerConfig, init: ModelState | None = None) -> ChainRecord:
    data = _as_dataset(data)
    if data.p != prior_cfg.p:
        raise ValueError(f"data has p={data.p}, prior has p={prior_cfg.p}")
    if data.n and (data.X.min() < 0 or data.X.max() > 1):
        raise ValueError("data rows must lie in [0, 1]^p")
    rng = np.random.default_rng(sampler_cfg.seed)
    if init is None:
        init = initial_state(data, prior_cfg, rng)
    chain = _Chain(data, prior_cfg, sampler_cfg, init, rng)
    states, log_posts, iters = [], [], []
    for it in range(sampler_cfg.n_iter):
        chain.step()
        if it >= sampler_cfg.n_burn and (it - sampler_cfg.n_burn) % sampler_cfg.thin == 0:
            s = chain.state
            states.append(s)
            log_posts.append(chain.ll + log_prior_state(s, prior_cfg))
            iters.append(it)
    if chain.failures:
        log.warning("%d proposals auto-rejected after numerical failure", chain.failures)
    return ChainRecord(
        states=states,
        log_posts=np.array(log_posts),
        acceptance={m: tuple(v) for m, v in chain.accept.items()},
        seed=sampler_cfg.seed,
        sampler_cfg=sampler_cfg.to_dict(),
        prior_cfg=prior_cfg.to_dict(),
        iterations=iters,
        failures=chain.failures,
    )


def posterior_mean(chain: ChainRecord, data, Xstar) -> np.ndarray:
    """Average of the GP predictive means over the chain's states."""
    if len(chain) == 0:
        raise ValueError("empty chain")
    data = _as_dataset(data)
    Xstar = np.asarray(Xstar, dtype=float)
    total = np.zeros(Xstar.shape[0])
    for s in chain.states:
        total += predict(data.y, data.X, s, Xstar)[0]
    return total / len(chain)


def inclusion_probabilities(chain: ChainRecord) -> np.ndarray:
    """Fraction of states in which each predictor is selected by some component."""
    if len(chain) == 0:
        raise ValueError("empty chain")
    p = chain.states[0].p
    counts = np.zeros(p)
    for s in chain.states:
        flags = np.zeros(p, dtype=bool)
        for c in s.components:
            flags[list(c.B.idx)] = True
        counts += flags
    return counts / len(chain)
