"""Synthetic regression data, L2 risk estimation and rate studies.

Truth functions are additive, ``f(x) = sum_s lam_s g_s(x_{b_s})``, where each
``g_s`` is a centered shape of unit Hölder norm:

``tensor-bump``
    ``h^alpha / ||K||_C * K((u - 1/2) / h)`` with ``h = 1/2``. Infinitely
    smooth with zero axis marginals.
``hölder-spike``
    A dipole ``P(|u - c1|) - P(|u - c2|)`` of radial spikes with
    ``P(r) = (w^alpha - r^alpha)_+`` (squared when ``alpha > 1``), centred at
    ``c1 = (1/4, ..., 1/4)`` and ``c2 = (3/4, ..., 3/4)``. Antisymmetric under
    ``u -> 1 - u``, hence centered; every axis marginal is nonzero, and the
    Hölder order is exactly ``alpha`` at the spike tips. The normalising constant is a finite-difference Hölder
    norm estimate.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats

from .data import Dataset, fmt
from .design import DesignSpec
from .gp import NumericalError
from .packing import bump_holder_norm, estimate_holder_norm, tensor_bump
from .prior import PriorConfig, derive_seed
from .sampler import SamplerConfig, posterior_mean, run_chain

log = logging.getLogger(__name__)

SHAPES = ("tensor-bump", "hölder-spike")
SPIKE_WIDTH = 0.25
BUMP_HALF_WIDTH = 0.5
MAX_FAIL_FRACTION = 0.2


class StudyAborted(RuntimeError):
    pass


def _spike_profile(r: np.ndarray, alpha: float, w: float) -> np.ndarray:
    out = np.clip(w**alpha - np.abs(r) ** alpha, 0.0, None)
    return out if alpha <= 1 else out**2


def _raw_spike(U: np.ndarray, alpha: float) -> np.ndarray:
    U = np.atleast_2d(U)
    c1 = np.full(U.shape[1], 0.25)
    c2 = 1.0 - c1
    r1 = np.sqrt(((U - c1) ** 2).sum(1))
    r2 = np.sqrt(((U - c2) ** 2).sum(1))
    return _spike_profile(r1, alpha, SPIKE_WIDTH) - _spike_profile(r2, alpha, SPIKE_WIDTH)


@lru_cache(maxsize=None)
def spike_norm(alpha: float, d: int) -> float:
    """Estimated Hölder norm of the unnormalised spike dipole."""
    return estimate_holder_norm(lambda U: _raw_spike(U, alpha), d, alpha)


def shape_eval(shape: str, alpha: float, U: np.ndarray) -> np.ndarray:
    """Unit-norm shape evaluated at rows of ``U`` (already restricted to the mask)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    d = U.shape[1]
    if shape == "tensor-bump":
        h = BUMP_HALF_WIDTH
        return h**alpha / bump_holder_norm(alpha, d) * tensor_bump((U - 0.5) / h)
    if shape == "hölder-spike":
        return _raw_spike(U, alpha) / spike_norm(alpha, d)
    raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")


@dataclass(frozen=True)
class TruthComponent:
    mask: tuple
    alpha: float
    lam: float
    shape: str = "hölder-spike"

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(sorted(int(j) for j in self.mask)))
        if not self.mask or len(set(self.mask)) != len(self.mask):
            raise ValueError(f"mask {self.mask} must be nonempty without repeats")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha={self.alpha} outside (0, 2]")
        if self.shape == "hölder-spike" and len(self.mask) > 2:
            raise ValueError("hölder-spike supports at most 2 predictors")
        if self.shape == "tensor-bump" and len(self.mask) > 3:
            raise ValueError("tensor-bump supports at most 3 predictors")
        if not self.lam >= 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")

    @property
    def d(self) -> int:
        return len(self.mask)


@dataclass(frozen=True)
class AdditiveTruthSpec:
    p: int
    components: tuple = ()
    dbar: int = 1

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        counts = np.zeros(self.p, dtype=int)
        seen = set()
        for c in self.components:
            if max(c.mask) >= self.p:
                raise ValueError(f"mask {c.mask} does not fit in p={self.p}")
            if c.mask in seen:
                raise ValueError(f"mask {c.mask} repeated")
            seen.add(c.mask)
            counts[list(c.mask)] += 1
        if counts.size and counts.max() > self.dbar:
            j = int(np.argmax(counts))
            raise ValueError(f"predictor {j} used by {counts[j]} components, exceeding dbar={self.dbar}")

    def __call__(self, X) -> np.ndarray:
        return truth_eval(self, X)

    def slope_target(self) -> float:
        """``-min_s 2 alpha_s / (2 alpha_s + d_s)``: exponent of the slowest component."""
        if not self.components:
            return float("nan")
        return -min(2 * c.alpha / (2 * c.alpha + c.d) for c in self.components)

    def to_dict(self) -> dict:
        return {"p": self.p, "dbar": self.dbar, "components": [asdict(c) for c in self.components]}

    @classmethod
    def from_dict(cls, d: dict) -> "AdditiveTruthSpec":
        comps = tuple(TruthComponent(tuple(c["mask"]), c["alpha"], c["lam"], c["shape"]) for c in d["components"])
        return cls(int(d["p"]), comps, int(d.get("dbar", 1)))


def truth_eval(truth: AdditiveTruthSpec, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != truth.p:
        raise ValueError(f"X has {X.shape[1]} columns, truth has p={truth.p}")
    out = np.zeros(X.shape[0])
    for c in truth.components:
        out += c.lam * shape_eval(c.shape, c.alpha, X[:, list(c.mask)])
    return out


def gen_dataset(design: DesignSpec, truth: AdditiveTruthSpec, n: int, mu: float, sigma: float, seed: int) -> Dataset:
    """``y = mu + f(X) + N(0, sigma^2)`` with ``X`` drawn from the design law."""
    if design.p != truth.p:
        raise ValueError(f"design p={design.p} differs from truth p={truth.p}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    X = design.sample(n, rng)
    noise = rng.standard_normal(n)
    y = mu + truth_eval(truth, X) + sigma * noise
    return Dataset(X, y, {"kind": "synthetic", "seed": int(seed), "mu": mu, "sigma": sigma})


@dataclass(frozen=True)
class RiskEstimate:
    mean_sq_error: float
    mc_std_err: float
    n_mc: int
    n: int | None = None
    p: int | None = None
    seed: int | None = None


def estimate_risk(predictor, truth, design: DesignSpec, n_mc: int, seed: int, offset: float = 0.0,
                  batch: int | None = None, n: int | None = None) -> RiskEstimate:
    """Monte Carlo estimate of ``||predictor - (offset + truth)||_Q^2``.

    Both functions are evaluated at the same fresh design draws, in batches of
    ``batch`` rows; the result does not depend on the batch size.
    """
    if n_mc < 100:
        raise ValueError(f"n_mc must be >= 100, got {n_mc}")
    rng = np.random.default_rng(seed)
    X = design.sample(n_mc, rng)
    batch = batch or n_mc
    err = np.empty(n_mc)
    for i in range(0, n_mc, batch):
        Xi = X[i:i + batch]
        err[i:i + batch] = (np.asarray(predictor(Xi), float) - offset - np.asarray(truth(Xi), float)) ** 2
    mse = float(err.mean())
    se = float(err.std(ddof=1) / math.sqrt(n_mc))
    return RiskEstimate(mse, se, n_mc, n, design.p, seed)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    std_err: float
    intercept: float


def fit_slope(n, risk) -> SlopeFit:
    """Least-squares slope of ``log risk`` against ``log n``."""
    n = np.asarray(n, float)
    risk = np.asarray(risk, float)
    if n.size < 2 or np.any(risk <= 0):
        raise ValueError("need at least two positive risks")
    r = stats.linregress(np.log(n), np.log(risk))
    se = float(r.stderr) if n.size > 2 else float("nan")
    return SlopeFit(float(r.slope), se, float(r.intercept))


@dataclass
class StudyConfig:
    design: DesignSpec
    truth: AdditiveTruthSpec
    prior: PriorConfig
    sampler: SamplerConfig
    n_grid: tuple
    replications: int = 10
    mu: float = 0.0
    sigma: float = 0.5
    seed: int = 0
    n_mc: int = 2000
    save_chains: bool = False

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        if len(self.n_grid) < 2 or any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid needs at least two positive sizes")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (self.design.p == self.truth.p == self.prior.p):
            raise ValueError("design, truth and prior disagree on p")

    def to_dict(self) -> dict:
        return {
            "design": self.design.to_dict(),
            "truth": self.truth.to_dict(),
            "prior": self.prior.to_dict(),
            "sampler": self.sampler.to_dict(),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "mu": self.mu,
            "sigma": self.sigma,
            "seed": self.seed,
            "n_mc": self.n_mc,
            "save_chains": self.save_chains,
        }


def run_replication(cfg: StudyConfig, n: int, rep: int, chain_dir: str | None = None) -> dict:
    """One fit-and-score run; never raises on numerical trouble."""
    data_seed = derive_seed(cfg.seed, n, rep, 0)
    chain_seed = derive_seed(cfg.seed, n, rep, 1)
    risk_seed = derive_seed(cfg.seed, n, rep, 2)
    row = {"n": n, "replication": rep, "risk": float("nan"), "mc_std_err": float("nan"),
           "status": "ok", "risk_n": float("nan")}
    try:
        data = gen_dataset(cfg.design, cfg.truth, n, cfg.mu, cfg.sigma, data_seed)
        chain = run_chain(data, cfg.prior, replace(cfg.sampler, seed=chain_seed))
        if chain_dir is not None:
            chain.to_files(chain_dir, f"n{n}_r{rep}")

        def pred(X):
            return posterior_mean(chain, data, X)

        est = estimate_risk(pred, cfg.truth, cfg.design, cfg.n_mc, risk_seed, offset=cfg.mu, n=n)
        fitted = pred(data.X)
        row["risk"] = est.mean_sq_error
        row["mc_std_err"] = est.mc_std_err
        row["risk_n"] = float(np.mean((fitted - cfg.mu - cfg.truth(data.X)) ** 2))
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("run n=%d rep=%d failed: %s", n, rep, exc)
        row["status"] = f"failed: {type(exc).__name__}"
    return row


def _run_task(args):
    cfg, n, rep, chain_dir = args
    return run_replication(cfg, n, rep, chain_dir)


RISK_COLUMNS = ("n", "replication", "risk", "mc_std_err", "status", "risk_n")


def summarize(rows: list, target: float) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    ns = sorted({r["n"] for r in ok})
    means = [float(np.mean([r["risk"] for r in ok if r["n"] == n])) for n in ns]
    out = {"n": ns, "mean_risk": means, "target_slope": target, "n_ok": len(ok), "n_failed": len(rows) - len(ok)}
    if len(ns) >= 2:
        fit = fit_slope(ns, means)
        se = fit.std_err if math.isfinite(fit.std_err) else None  # undefined with two grid points
        out.update(slope=fit.slope, slope_std_err=se, intercept=fit.intercept)
    return out


def rate_study(cfg: StudyConfig, outdir, workers: int | None = None) -> dict:
    """Run (or resume) a rate study persisted under ``outdir``.

    Finished runs are kept in ``runs/`` and skipped on resume, so a completed
    directory is left untouched. Risks are merged in sorted ``(n, replication)``
    order before any summary is written.
    """
    outdir = Path(outdir)
    runs_dir = outdir / "runs"
    manifest = {"config": cfg.to_dict(), "format": 1}
    mpath = outdir / "manifest.json"
    spath = outdir / "summary.json"
    if mpath.exists():
        old = json.loads(mpath.read_text(encoding="utf-8"))
        if old.get("config") != json.loads(json.dumps(manifest["config"])):
            raise ValueError(f"{outdir} holds a study with a different configuration")
        if spath.exists():
            return json.loads(spath.read_text(encoding="utf-8"))
    runs_dir.mkdir(parents=True, exist_ok=True)
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    chain_dir = str(outdir / "chains") if cfg.save_chains else None

    tasks = []
    for n in cfg.n_grid:
        for rep in range(cfg.replications):
            if not (runs_dir / f"n{n}_r{rep}.json").exists():
                tasks.append((cfg, n, rep, chain_dir))
    workers = max(1, int(workers or os.cpu_count() or 1))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    for row in results:
        (runs_dir / f"n{row['n']}_r{row['replication']}.json").write_text(json.dumps(row, sort_keys=True) + "\n",
                                                                          encoding="utf-8")
    rows = [json.loads(f.read_text(encoding="utf-8")) for f in runs_dir.glob("*.json")]
    rows.sort(key=lambda r: (r["n"], r["replication"]))
    with open(outdir / "risks.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(RISK_COLUMNS)
        for r in rows:
            w.writerow([r["n"], r["replication"], fmt(r["risk"]), fmt(r["mc_std_err"]), r["status"], fmt(r["risk_n"])])
    n_failed = sum(r["status"] != "ok" for r in rows)
    if n_failed > MAX_FAIL_FRACTION * len(rows):
        raise StudyAborted(f"{n_failed} of {len(rows)} runs failed")
    summary = summarize(rows, cfg.truth.slope_target())
    spath.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return summary
