"""Experiment configuration: INI-style sections parsed with ``configparser``.

Grammar (all sections optional, ``#`` or ``;`` start comments)::

    [model]
    kind = ising              ; ising | gaussian-var
    betas = 0.2, 0.3, 1.0     ; inverse temperatures, one per component
    weights = 0.3, 0.3, 0.4   ; defaults to uniform
    N = 1600
    delta = 0.5               ; gaussian-var only

    [diffusion]
    dt = 1e-3
    t_min = 1e-3

    [criterion]
    K = 1
    fluctuation = asymptotic  ; asymptotic | empirical
    method = mc               ; mc | asymptotic | replica

    [experiment]
    kind = predict            ; predict | uturn | misattribution | bands | replica | gaussian | collapse
    t = 0.9                   ; U-turn time
    t_grid = 0.1, 0.2, 0.4    ; explicit grid, or t_lo / t_hi / t_points (log-spaced)
    n_samples = 1000
    N_list = 200, 400, 800
    origin = 0
    pairs = 0-1, 1-2          ; replica validation / bands
    population_size = 100000  ; replica populations

    [rng]
    seed = 0

    [output]
    dir = runs

A ``manifest.json`` written by a previous run is also accepted as a config;
its ``config`` echo is loaded verbatim.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("ising", "gaussian-var")
METHODS = ("mc", "asymptotic", "replica")
FLUCTUATIONS = ("asymptotic", "empirical")
EXPERIMENTS = ("predict", "uturn", "misattribution", "bands", "replica", "gaussian", "collapse")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))
        self.errors = errors


@dataclass
class Config:
    kind: str = "ising"
    betas: list[float] = field(default_factory=lambda: [0.5, 1.0])
    weights: list[float] | None = None
    N: int = 800
    delta: float = 0.5
    dt: float = 1e-3
    t_min: float = 1e-3
    K: float = 1.0
    fluctuation: str = "asymptotic"
    method: str = "mc"
    experiment: str | None = None
    t: float = 0.5
    t_grid: list[float] | None = None
    t_lo: float = 0.05
    t_hi: float = 4.0
    t_points: int = 40
    n_samples: int = 1000
    N_list: list[int] = field(default_factory=lambda: [200, 400, 800])
    origin: int = 0
    pairs: list[tuple[int, int]] | None = None
    population_size: int = 100_000
    seed: int = 0
    out_dir: str = "runs"

    def grid(self) -> np.ndarray:
        if self.t_grid is not None:
            return np.asarray(self.t_grid, dtype=np.float64)
        return np.geomspace(self.t_lo, self.t_hi, self.t_points)

    def all_pairs(self) -> list[tuple[int, int]]:
        if self.pairs is not None:
            return list(self.pairs)
        R = len(self.betas)
        return [(r, s) for r in range(R) for s in range(R) if r != s]

    def echo(self) -> dict:
        d = asdict(self)
        if d["pairs"] is not None:
            d["pairs"] = [list(p) for p in d["pairs"]]
        return d

    def validate(self) -> "Config":
        errs = []
        if self.kind not in KINDS:
            errs.append(f"model.kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "ising":
            if not self.betas:
                errs.append("model.betas must list at least one value")
            elif any(not (math.isfinite(b) and b >= 0) for b in self.betas):
                errs.append("model.betas must be finite and non-negative")
            if self.weights is not None:
                if len(self.weights) != len(self.betas):
                    errs.append("model.weights must have one entry per beta")
                elif any(w <= 0 for w in self.weights) or abs(sum(self.weights) - 1) > 1e-12:
                    errs.append("model.weights must be positive and sum to 1")
        if self.kind == "gaussian-var" and not 0 < self.delta < 1:
            errs.append("model.delta must lie in (0, 1)")
        if self.N < 1:
            errs.append("model.N must be positive")
        if not self.dt > 0:
            errs.append("diffusion.dt must be positive")
        if not self.t_min > 0:
            errs.append("diffusion.t_min must be positive")
        if not self.K > 0:
            errs.append("criterion.K must be positive")
        if self.fluctuation not in FLUCTUATIONS:
            errs.append(f"criterion.fluctuation must be one of {FLUCTUATIONS}")
        if self.method not in METHODS:
            errs.append(f"criterion.method must be one of {METHODS}")
        if self.experiment is not None and self.experiment not in EXPERIMENTS:
            errs.append(f"experiment.kind must be one of {EXPERIMENTS}")
        if self.n_samples < 1:
            errs.append("experiment.n_samples must be positive")
        g = self.grid()
        if len(g) == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
            errs.append("time grid must be positive and strictly increasing")
        if self.population_size < 100:
            errs.append("experiment.population_size must be at least 100")
        if any(n < 1 for n in self.N_list):
            errs.append("experiment.N_list entries must be positive")
        R = len(self.betas)
        if self.kind == "ising" and not 0 <= self.origin < R:
            errs.append("experiment.origin out of range")
        if self.pairs is not None:
            for r, s in self.pairs:
                if not (0 <= r < R and 0 <= s < R and r != s):
                    errs.append(f"experiment.pairs entry {r}-{s} invalid")
        if not 0 <= self.seed < 2**64:
            errs.append("rng.seed must be an unsigned 64-bit integer")
        if errs:
            raise ConfigError(errs)
        return self


# (section, key) -> (field, parser)
def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.replace(",", " ").split()]


def _pairs(s: str) -> list[tuple[int, int]]:
    out = []
    for item in s.replace(",", " ").split():
        r, s_ = item.split("-")
        out.append((int(r), int(s_)))
    return out


_KEYS = {
    ("model", "kind"): ("kind", str.strip),
    ("model", "betas"): ("betas", _floats),
    ("model", "weights"): ("weights", _floats),
    ("model", "n"): ("N", int),
    ("model", "delta"): ("delta", float),
    ("diffusion", "dt"): ("dt", float),
    ("diffusion", "t_min"): ("t_min", float),
    ("criterion", "k"): ("K", float),
    ("criterion", "fluctuation"): ("fluctuation", str.strip),
    ("criterion", "method"): ("method", str.strip),
    ("experiment", "kind"): ("experiment", str.strip),
    ("experiment", "t"): ("t", float),
    ("experiment", "t_grid"): ("t_grid", _floats),
    ("experiment", "t_lo"): ("t_lo", float),
    ("experiment", "t_hi"): ("t_hi", float),
    ("experiment", "t_points"): ("t_points", int),
    ("experiment", "n_samples"): ("n_samples", int),
    ("experiment", "n_list"): ("N_list", _ints),
    ("experiment", "origin"): ("origin", int),
    ("experiment", "pairs"): ("pairs", _pairs),
    ("experiment", "population_size"): ("population_size", int),
    ("rng", "seed"): ("seed", int),
    ("output", "dir"): ("out_dir", str.strip),
}


def parse_config_text(text: str) -> Config:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep the user's spelling for error messages
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError([f"syntax: {e}"]) from e
    values, errs = {}, []
    for section in cp.sections():
        for key, raw in cp.items(section):
            spec = _KEYS.get((section.lower(), key.lower()))
            if spec is None:
                errs.append(f"unknown key {section}.{key}")
                continue
            name, conv = spec
            try:
                values[name] = conv(raw)
            except ValueError:
                errs.append(f"{section}.{key}: cannot parse {raw!r}")
    cfg = Config(**values)
    try:
        cfg.validate()
    except ConfigError as e:
        errs += e.errors
    if errs:
        raise ConfigError(errs)
    return cfg


def config_from_echo(d: dict) -> Config:
    d = dict(d)
    if d.get("pairs") is not None:
        d["pairs"] = [tuple(p) for p in d["pairs"]]
    try:
        return Config(**d).validate()
    except TypeError as e:
        raise ConfigError([str(e)]) from e


def load_config(path: str | Path | None) -> Config:
    """Read a config file, or a previous run's ``manifest.json``; defaults when ``path`` is None."""
    if path is None:
        return Config().validate()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"cannot read {path}: {e}"]) from e
    if path.suffix == ".json":
        try:
            return config_from_echo(json.loads(text)["config"])
        except (json.JSONDecodeError, KeyError) as e:
            raise ConfigError([f"{path} is not a run manifest: {e}"]) from e
    return parse_config_text(text)
