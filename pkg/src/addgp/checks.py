"""Self-check suites behind the ``check`` subcommand.

Each suite returns a :class:`CheckResult`; the instance generators are
public so the test suite can reuse them.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .codes import pairwise_min_distance, vg_code
from .data import Dataset
from .design import DesignSpec
from .lemmas import SeparableFunction, empirical_norm_check, overlap_bound_check
from .packing import GridFunction, holder_packing, max_feasible_eps
from .prior import PriorConfig, sample_prior
from .sampler import SamplerConfig, run_chain

KS_TOL = 0.05
EQDIFF_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(name, fn):
    t = time.perf_counter()
    ok, detail = fn()
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t)


def prior_marginals(states) -> dict:
    return {
        "K": np.array([s.K for s in states], float),
        "size": np.array([c.B.popcount for s in states for c in s.components[:1]], float),
        "A": np.array([s.components[0].A for s in states]),
        "L": np.array([s.components[0].L for s in states]),
        "mu": np.array([s.mu for s in states]),
        "sigma": np.array([s.sigma for s in states]),
    }


def prior_recovery_distances(p: int = 20, n_keep: int = 25_000, thin: int = 4, seed: int = 0) -> dict:
    """KS distances between zero-data chain marginals and ancestral draws.

    Component-level marginals use the first component of each state, which
    is exchangeable with the others under the prior.
    """
    prior = PriorConfig(p)
    cfg = SamplerConfig(n_iter=n_keep * thin, n_burn=0, thin=thin, rw_scales=(1.0, 1.0, 1.5), seed=seed)
    chain = run_chain(Dataset.empty(p), prior, cfg)
    rng = np.random.default_rng(seed + 1)
    ref = [sample_prior(prior, rng) for _ in range(n_keep)]
    a, b = prior_marginals(chain.states), prior_marginals(ref)
    return {k: float(stats.ks_2samp(a[k], b[k]).statistic) for k in a}


def check_prior_recovery(n_keep: int = 25_000) -> CheckResult:
    def run():
        ks = prior_recovery_distances(n_keep=n_keep)
        return max(ks.values()) < KS_TOL, ", ".join(f"{k}={v:.3f}" for k, v in ks.items())

    return _timed("prior-recovery", run)


def eqdiff_errors(grid_res: int = 2048) -> dict:
    out = {}
    for alpha in (1.0, 2.0):
        P = holder_packing(alpha, 1, 0.5 * max_feasible_eps(alpha, 1))
        out[alpha] = P.verify(grid_res)["max_rel_err"]
    return out


def check_eqdiff() -> CheckResult:
    def run():
        errs = eqdiff_errors()
        return max(errs.values()) < EQDIFF_TOL, ", ".join(f"alpha={a:g}: {e:.2e}" for a, e in errs.items())

    return _timed("eqdiff", run)


VG_LENGTHS = (8, 16, 24, 32, 48, 64)


def vg_counts() -> dict:
    out = {}
    for M in VG_LENGTHS:
        dmin = math.ceil(M / 8)
        code = vg_code(M, dmin)
        ok = len(code) >= 2 ** (M / 8) and pairwise_min_distance(code.words) >= dmin and not code.words[0].any()
        out[M] = (len(code), ok)
    return out


def check_vg() -> CheckResult:
    def run():
        res = vg_counts()
        return all(ok for _, ok in res.values()), ", ".join(f"M={M}: {n}" for M, (n, _) in res.items())

    return _timed("varshamov-gilbert", run)


def random_overlap_family(rng, p: int = 6, res: int = 12, max_k: int = 6):
    """Random family of centered-or-not functions with overlapping masks."""
    k = int(rng.integers(1, max_k + 1))
    separable = bool(rng.random() < 0.5)
    fam = []
    for _ in range(k):
        size = int(rng.integers(1, 3))
        mask = tuple(sorted(rng.choice(p, size=size, replace=False).tolist()))
        if separable:
            factors = {}
            for j in mask:
                u = rng.standard_normal(res)
                if rng.random() < 0.5:
                    u -= u.mean()
                factors[j] = u
            fam.append(SeparableFunction(factors, float(rng.uniform(0.1, 2.0))))
        else:
            vals = rng.standard_normal((res,) * size)
            if rng.random() < 0.5:
                vals -= vals.mean(axis=0, keepdims=True)
            fam.append((GridFunction(size, res, vals), mask))
    return fam


def overlap_fuzz(n_instances: int = 500, seed: int = 0) -> int:
    rng = np.random.default_rng(seed)
    return sum(not overlap_bound_check(random_overlap_family(rng)).holds for _ in range(n_instances))


def check_overlap(n_instances: int = 500) -> CheckResult:
    def run():
        bad = overlap_fuzz(n_instances)
        return bad == 0, f"{bad} violations in {n_instances} instances"

    return _timed("overlap-lemma", run)


@dataclass
class _Wave:
    amp: float
    freq: int
    phase: float
    j: int

    def __call__(self, X):
        return self.amp * np.sin(2 * np.pi * self.freq * X[:, self.j] + self.phase)


def random_norm_instance(rng, p: int = 3):
    N = int(rng.integers(1, 9))
    funcs = [_Wave(float(rng.uniform(0.01, 1.0)), int(rng.integers(1, 4)), float(rng.uniform(0, 2 * np.pi)),
                   int(rng.integers(0, p))) for _ in range(N)]
    n = int(rng.integers(20, 400))
    delta = float(rng.uniform(0.05, 0.5))
    return funcs, DesignSpec(p), n, delta


def norm_fuzz(n_instances: int = 100, seed: int = 0, n_mc: int = 200) -> int:
    rng = np.random.default_rng(seed)
    bad = 0
    for i in range(n_instances):
        funcs, design, n, delta = random_norm_instance(rng)
        rep = empirical_norm_check(funcs, design, n, delta, n_mc=n_mc, seed=i, n_q=20_000)
        bad += not rep.passed
    return bad


def check_norm(n_instances: int = 100) -> CheckResult:
    def run():
        bad = norm_fuzz(n_instances)
        return bad == 0, f"{bad} violations in {n_instances} instances"

    return _timed("empirical-norm", run)


SUITES = (check_prior_recovery, check_eqdiff, check_vg, check_overlap, check_norm)


def run_all() -> list:
    return [suite() for suite in SUITES]
