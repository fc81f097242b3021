"""Experiment configuration files.

The format is INI (``[section]`` headers, ``key = value`` lines); lists are
comma separated. Predictor indices in masks are 1-based, matching the
``x1..xp`` CSV columns. Relative paths resolve against the config file's
directory.
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field
from pathlib import Path

from .design import DesignSpec
from .prior import PriorConfig
from .rates import AdditiveClassSpec
from .sampler import SamplerConfig
from .sim import AdditiveTruthSpec, StudyConfig, TruthComponent

ENV_OUTPUT = "ADDGP_OUTPUT_DIR"
ENV_WORKERS = "ADDGP_WORKERS"


class ConfigError(ValueError):
    pass


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


PARSERS = {"int": int, "float": float, "str": str.strip, "bool": _bool, "floats": _floats, "ints": _ints}

SCHEMA = {
    "design": {"p": "int", "law": "str", "beta_a": "float", "beta_b": "float", "Delta": "float"},
    "truth": {"dbar": "int", "mu": "float", "sigma": "float"},
    "component": {"mask": "ints", "alpha": "float", "lam": "float", "shape": "str"},
    "prior": {"D0": "int", "K0": "int", "a1": "float", "a2": "float", "ell_scale": "float", "mu_sd": "float",
              "sigma_lo": "float", "sigma_hi": "float", "k_ratio": "float"},
    "sampler": {"n_iter": "int", "n_burn": "int", "thin": "int", "move_probs": "floats", "rw_scales": "floats",
                "seed": "int"},
    "data": {"path": "str", "n": "int", "seed": "int", "predict_path": "str"},
    "study": {"n_grid": "ints", "replications": "int", "n_mc": "int", "save_chains": "bool", "seed": "int"},
    "rates": {"p_grid": "ints", "n_grid": "floats", "d": "ints", "alpha": "floats", "lam": "floats",
              "sigma": "float", "K0": "int", "D0": "int", "dbar": "int"},
    "packing": {"alpha": "float", "d": "int", "eps": "float", "p": "int", "grid_res": "int", "dump_grids": "bool",
                "seed": "int"},
    "output": {"dir": "str", "workers": "int"},
}


def _kind(section: str) -> str:
    return "component" if section.startswith("component.") else section


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    """Typed sections, ``{section: {key: value}}``, plus the directory paths resolve against."""

    sections: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.sections == other.sections

    @classmethod
    def parse(cls, text: str, base_dir=None) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        sections = {}
        for name in cp.sections():
            kind = _kind(name)
            if kind not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]")
            if kind == "component" and not name.split(".", 1)[1].isdigit():
                raise ConfigError(f"component sections are named [component.N], got [{name}]")
            out = {}
            for key, raw in cp.items(name):
                if key not in SCHEMA[kind]:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                try:
                    out[key] = PARSERS[SCHEMA[kind][key]](raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key!r} in [{name}]: {exc}") from exc
            sections[name] = out
        return cls(sections, Path(base_dir) if base_dir is not None else Path.cwd())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.parse(text, path.resolve().parent)

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for name in sorted(self.sections):
            cp[name] = {k: _format(v) for k, v in self.sections[name].items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def require(self, name: str, *keys) -> dict:
        sec = self.sections.get(name)
        if sec is None:
            raise ConfigError(f"missing section [{name}]")
        for k in keys:
            if k not in sec:
                raise ConfigError(f"missing key {k!r} in [{name}]")
        return dict(sec)

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    # typed views -----------------------------------------------------------

    def output_dir(self) -> Path:
        env = os.environ.get(ENV_OUTPUT)
        if env:
            return Path(env)
        return self.path(self.section("output").get("dir", "out"))

    def workers(self) -> int:
        env = os.environ.get(ENV_WORKERS)
        if env:
            try:
                w = int(env)
            except ValueError as exc:
                raise ConfigError(f"{ENV_WORKERS} must be an integer, got {env!r}") from exc
        else:
            w = self.section("output").get("workers", os.cpu_count() or 1)
        if w < 1:
            raise ConfigError("workers must be >= 1")
        return w

    def seed(self, section: str, default: int = 0) -> int:
        return int(self.section(section).get("seed", default))

    def design(self, p: int | None = None) -> DesignSpec:
        sec = self.section("design")
        if p is not None:
            sec.setdefault("p", p)
        if "p" not in sec:
            raise ConfigError("missing key 'p' in [design]")
        return _build(DesignSpec, sec, "design")

    def truth(self, p: int) -> AdditiveTruthSpec:
        comps = []
        names = sorted((s for s in self.sections if s.startswith("component.")), key=lambda s: int(s.split(".")[1]))
        for name in names:
            sec = self.require(name, "mask", "alpha", "lam")
            if min(sec["mask"], default=0) < 1:
                raise ConfigError(f"[{name}] mask entries are 1-based predictor indices")
            sec["mask"] = tuple(j - 1 for j in sec["mask"])
            comps.append(_build(TruthComponent, sec, name))
        dbar = self.section("truth").get("dbar", 1)
        return _build(AdditiveTruthSpec, {"p": p, "components": tuple(comps), "dbar": dbar}, "truth")

    def prior(self, p: int) -> PriorConfig:
        return _build(PriorConfig, {"p": p, **self.section("prior")}, "prior")

    def sampler(self) -> SamplerConfig:
        return _build(SamplerConfig, self.section("sampler"), "sampler")

    def study(self) -> StudyConfig:
        st = self.require("study", "n_grid")
        p = self.require("design", "p")["p"]
        tr = self.section("truth")
        kwargs = {
            "design": self.design(),
            "truth": self.truth(p),
            "prior": self.prior(p),
            "sampler": self.sampler(),
            "n_grid": st["n_grid"],
            "replications": st.get("replications", 10),
            "mu": tr.get("mu", 0.0),
            "sigma": tr.get("sigma", 0.5),
            "seed": st.get("seed", 0),
            "n_mc": st.get("n_mc", 2000),
            "save_chains": st.get("save_chains", False),
        }
        return _build(StudyConfig, kwargs, "study")

    def rates(self) -> tuple:
        sec = self.require("rates", "p_grid", "n_grid", "d", "alpha")
        k = len(sec["d"])
        lam = sec.get("lam", (1.0,) * k)
        spec = _build(AdditiveClassSpec, {"p": max(sec["p_grid"]), "d": sec["d"], "alpha": sec["alpha"],
                                          "lam": lam, "dbar": sec.get("dbar", 1)}, "rates")
        for p in sec["p_grid"]:
            if p <= spec.total_d or k * max(spec.d) > p:
                raise ConfigError(f"p={p} in p_grid is too small for d={spec.d}")
        if any(n < 1 for n in sec["n_grid"]):
            raise ConfigError("n_grid entries must be >= 1")
        sigma = sec.get("sigma", 1.0)
        if not sigma > 0:
            raise ConfigError("sigma must be positive")
        return spec, sec["n_grid"], sec["p_grid"], sigma, sec.get("K0"), sec.get("D0")


def _build(cls, kwargs: dict, where: str):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{where}]: {exc}") from exc
