"""Command-line front end: ``addgp {fit,predict,rates,packing,study,check}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 failed self-check.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import run_all
from .codes import CodeDomainError
from .config import ConfigError, ExperimentConfig
from .data import DataFormatError, Dataset, fmt, read_dataset_csv, read_points_csv, write_dataset_csv
from .gp import NumericalError
from .packing import PackingDomainError, entropy_constant, holder_packing, sparse_lift
from .rates import RateDomainError, rate_table
from .sampler import ChainRecord, inclusion_probabilities, posterior_mean, run_chain
from .sim import StudyAborted, gen_dataset, rate_study

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("addgp")


def _writer(fh):
    return csv.writer(fh, lineterminator="\r\n")


def _outdir(cfg: ExperimentConfig) -> Path:
    out = cfg.output_dir()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_data(cfg: ExperimentConfig, out: Path) -> Dataset:
    sec = cfg.section("data")
    if "path" in sec:
        return read_dataset_csv(cfg.path(sec["path"]))
    if "n" not in sec:
        raise ConfigError("[data] needs either 'path' or 'n' (synthetic truth)")
    design = cfg.design()
    truth = cfg.truth(design.p)
    tr = cfg.section("truth")
    data = gen_dataset(design, truth, sec["n"], tr.get("mu", 0.0), tr.get("sigma", 0.5), sec.get("seed", 0))
    write_dataset_csv(data, out / "dataset.csv")
    return data


def _write_predictions(path: Path, Xstar: np.ndarray, mean: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow([f"x{j + 1}" for j in range(Xstar.shape[1])] + ["mean"])
        for row, m in zip(Xstar, mean):
            w.writerow([fmt(v) for v in row] + [fmt(m)])


def _prediction_points(cfg: ExperimentConfig, data: Dataset) -> np.ndarray:
    sec = cfg.section("data")
    if "predict_path" in sec:
        X, _ = read_points_csv(cfg.path(sec["predict_path"]), p=data.p, require_y=False)
        return X
    return data.X


def cmd_fit(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    data = _load_data(cfg, out)
    prior = cfg.prior(data.p)
    chain = run_chain(data, prior, cfg.sampler())
    chain.to_files(out, "chain")
    incl = inclusion_probabilities(chain)
    with open(out / "inclusion.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["predictor", "probability"])
        for j, v in enumerate(incl):
            w.writerow([f"x{j + 1}", fmt(v)])
    Xstar = _prediction_points(cfg, data)
    _write_predictions(out / "predictions.csv", Xstar, posterior_mean(chain, data, Xstar))
    print(f"fit: {len(chain)} states kept, outputs in {out}")
    return EXIT_OK


def cmd_predict(cfg: ExperimentConfig) -> int:
    out = _outdir(cfg)
    cpath = out / "chain.json"
    if not cpath.exists():
        raise ConfigError(f"no chain at {cpath}; run 'fit' first")
    chain = ChainRecord.from_json(cpath)
    sec = cfg.section("data")
    data = read_dataset_csv(cfg.path(sec["path"]) if "path" in sec else out / "dataset.csv")
    Xstar = _prediction_points(cfg, data)
    _write_predictions(out / "predictions.csv", Xstar, posterior_mean(chain, data, Xstar))
    print(f"predict: {Xstar.shape[0]} points written to {out / 'predictions.csv'}")
    return EXIT_OK


RATE_COLUMNS = ("n", "p", "m3_estimation", "m3_selection_lower", "m3_selection_upper", "m3_lower", "m3_upper",
                "m2_risk", "contraction", "in_scope", "pre_asymptotic")


def cmd_rates(cfg: ExperimentConfig) -> int:
    spec, n_grid, p_grid, sigma, K0, D0 = cfg.rates()
    rows = rate_table(spec, n_grid, p_grid, sigma, K0=K0, D0=D0)
    out = _outdir(cfg)
    with open(out / "rates.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(RATE_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) if isinstance(r[c], float) else r[c] for c in RATE_COLUMNS])
    sys.stdout.write((out / "rates.csv").read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_packing(cfg: ExperimentConfig) -> int:
    sec = cfg.require("packing", "alpha", "d", "eps")
    base = holder_packing(sec["alpha"], sec["d"], sec["eps"], seed=sec.get("seed", 0))
    p = sec.get("p", base.d)
    lifted = sparse_lift(base, p, base.d)
    check = base.verify(sec.get("grid_res"))
    out = _outdir(cfg)
    W = base.words.astype(float)
    G = base.basis_gram(sec.get("grid_res"))
    norms = np.sqrt(np.einsum("ij,jk,ik->i", W, G, W))
    with open(out / "packing_manifest.csv", "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["member_id", "mask", "base_index", "word", "l2_norm"])
        words = ["".join("1" if b else "0" for b in row) for row in base.words]
        for mid, (mask, i) in enumerate(lifted.members()):
            w.writerow([mid, " ".join(str(j + 1) for j in mask), i, words[i], fmt(norms[i])])
    summary = {
        "alpha": base.alpha, "d": base.d, "p": p, "requested_eps": base.requested_eps, "certified_eps": base.eps,
        "m": base.m, "M": base.M, "h": base.h, "base_size": len(base), "min_hamming": base.min_hamming,
        "lifted_size": len(lifted), "log_cardinality": lifted.log_cardinality,
        "entropy_constant": entropy_constant(base.alpha, base.d),
        "quadrature_min_distance": check["min_distance"], "quadrature_max_rel_err": check["max_rel_err"],
        "certified": check["certified"],
    }
    (out / "packing_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if sec.get("dump_grids", False):
        gdir = out / "grids"
        gdir.mkdir(exist_ok=True)
        for i in range(len(base)):
            g = base.grid_function(i, sec.get("grid_res"))
            np.savetxt(gdir / f"member_{i}.csv", g.values.reshape(g.grid_res, -1), delimiter=",", fmt="%.17g")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK if check["certified"] else EXIT_NUMERIC


def cmd_study(cfg: ExperimentConfig) -> int:
    study = cfg.study()
    try:
        summary = rate_study(study, _outdir(cfg), workers=cfg.workers())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_check(_cfg=None) -> int:
    ok = True
    for r in run_all():
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.1f}s)")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "rates": cmd_rates, "packing": cmd_packing, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="addgp", description="Additive Gaussian process regression toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="INI experiment configuration")
    sub.add_parser("check", help="run the self-check suites")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "check":
            return cmd_check()
        cfg = ExperimentConfig.load(args.config)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataFormatError, PackingDomainError, RateDomainError, CodeDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, StudyAborted) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
