"""Experiment configuration: presets, YAML loading and validation.

A config is a YAML mapping::

    experiment: table1          # a preset name or "custom"
    trials: 10
    seed: 0
    parallelism: 1
    record_runtime: false
    synth: {snr1_db: 15}        # overrides applied to every sweep point
    algorithms:                 # replaces the preset's list when given
      - name: jnkm
        params: {lam: 1.0}
    sweep:                      # optional list of points
      - label: "snr2=3"
        synth: {snr2_db: 3}
        algorithms: {jnkm: {lam: 10}}
    output: {path: results.json, format: json}

Keys left out fall back to the preset (or to the defaults for ``custom``).
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..synthgen import SynthParams
from .algorithms import REGISTRY

EXPERIMENTS = ("table1", "table2", "table3", "table4", "table5", "table6",
               "lambda_sweep", "custom")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Raised for any invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    experiment: str = "custom"
    synth: dict = field(default_factory=dict)
    algorithms: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    trials: int = 1
    seed: int = 0
    parallelism: int = 1
    record_runtime: bool = False
    output_path: Optional[str] = None
    output_format: str = "json"

    def points(self):
        """Resolved sweep points as ``(label, SynthParams, {algo: params})``."""
        raw = self.sweep or [{"label": "base"}]
        out = []
        for i, pt in enumerate(raw):
            synth = {**self.synth, **pt.get("synth", {})}
            synth["seed"] = self.seed
            algos = {}
            for a in self.algorithms:
                algos[a["name"]] = {**a.get("params", {}),
                                    **pt.get("algorithms", {}).get(a["name"], {})}
            out.append((str(pt.get("label", i)), SynthParams(**synth), algos))
        return out

    def resolved(self):
        """Plain-data view of everything that determines the results."""
        return {
            "experiment": self.experiment,
            "synth": _plain(self.synth),
            "algorithms": _plain(self.algorithms),
            "sweep": _plain(self.sweep),
            "trials": self.trials,
            "seed": self.seed,
            "record_runtime": self.record_runtime,
        }

    def to_yaml(self):
        doc = self.resolved()
        doc["parallelism"] = self.parallelism
        doc["output"] = {"path": self.output_path, "format": self.output_format}
        return yaml.safe_dump(doc, sort_keys=False)

    def config_hash(self):
        # worker count and output location never change the numbers
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _snr_sweep(key, values):
    return [{"label": f"{key}={v}", "synth": {key: v}} for v in values]


_NMF_BASE = dict(model="nmf", I=50, J=1000, F=7, K=10, outlier_fraction=0.03)
_TABLE1_ALGOS = ["kmeans", "rkm", "fkm", "nmf_km", "jnkm"]

PRESETS = {
    "table1": dict(
        synth={**_NMF_BASE, "snr1_db": 15.0},
        algorithms=_TABLE1_ALGOS,
        sweep=_snr_sweep("snr2_db", [3, 6, 9, 12, 15, 18]),
    ),
    "table2": dict(
        synth={**_NMF_BASE, "snr2_db": 10.0},
        algorithms=_TABLE1_ALGOS,
        sweep=_snr_sweep("snr1_db", [5, 10, 15, 20, 25, 30]),
    ),
    "table3": dict(
        synth={**_NMF_BASE, "snr1_db": 6.0, "snr2_db": 8.0},
        algorithms=["rkm", "fkm", "jnkm"],
        sweep=[{"label": f"K={k}", "synth": {"K": k, "J": 100 * k}} for k in range(5, 12)],
    ),
    "table4": dict(
        synth={**_NMF_BASE, "model": "volmin", "snr1_db": 15.0},
        algorithms=["kmeans", "rkm", "fkm", "jnkm", "jvkm", "volmin_km"],
        sweep=_snr_sweep("snr2_db", [3, 6, 9, 12, 15, 18]),
    ),
    "table5": dict(
        synth=dict(model="tensor", I=30, J=30, L=30, snr1_db=20.0, snr2_db=25.0,
                   outlier_slabs=2),
        algorithms=["ntf", "jtkm"],
        sweep=[{"label": f"F={f}", "synth": {"F": f, "K": f}} for f in range(2, 9)],
    ),
    "table6": dict(
        synth=dict(model="subspace", I=10, J=200, F=4, K=2, ranks=[2, 2], snr1_db=30.0),
        algorithms=["nmf_km", "jnks"],
        sweep=_snr_sweep("snr2_db", [3, 5, 7, 9, 11, 13, 15]),
    ),
    "lambda_sweep": dict(
        synth=dict(model="nmf", I=10, J=100, F=2, K=2, snr1_db=5.0, snr2_db=30.0),
        algorithms=["jnkm"],
        sweep=[{"label": f"lam=1e{e / 2:g}", "algorithms": {"jnkm": {"lam": 10.0 ** (e / 2)}}}
               for e in range(0, 9)],
    ),
    "custom": dict(synth={}, algorithms=[], sweep=[]),
}

PRESET_TRIALS = 100


def _norm_algos(algos):
    out = []
    for a in algos:
        if isinstance(a, str):
            a = {"name": a}
        if not isinstance(a, dict) or "name" not in a:
            raise ConfigError(f"algorithm entries need a name, got {a!r}")
        out.append({"name": str(a["name"]), "params": dict(a.get("params") or {})})
    return out


def from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    known = {"experiment", "synth", "algorithms", "sweep", "trials", "seed",
             "parallelism", "record_runtime", "output"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    name = doc.get("experiment", "custom")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")
    preset = copy.deepcopy(PRESETS[name])
    out = doc.get("output") or {}
    cfg = ExperimentConfig(
        experiment=name,
        synth={**preset["synth"], **(doc.get("synth") or {})},
        algorithms=_norm_algos(doc["algorithms"] if "algorithms" in doc else preset["algorithms"]),
        sweep=list(doc["sweep"] if "sweep" in doc else preset["sweep"]),
        trials=int(doc.get("trials", PRESET_TRIALS if name != "custom" else 1)),
        seed=int(doc.get("seed", 0)),
        parallelism=int(doc.get("parallelism", 1)),
        record_runtime=bool(doc.get("record_runtime", False)),
        output_path=out.get("path"),
        output_format=out.get("format", "json"),
    )
    validate(cfg)
    return cfg


def load(path):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return from_dict(doc or {})


def preset(name, **overrides):
    return from_dict({"experiment": name, **overrides})


def validate(cfg):
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if cfg.output_format not in FORMATS:
        raise ConfigError(f"output format must be one of {FORMATS}")
    if not cfg.algorithms:
        raise ConfigError("algorithm list is empty")
    names = [a["name"] for a in cfg.algorithms]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate algorithm names in {names}")
    for n in names:
        if n not in REGISTRY:
            raise ConfigError(f"unknown algorithm {n!r}; known: {sorted(REGISTRY)}")
    for pt in cfg.sweep:
        if not isinstance(pt, dict):
            raise ConfigError(f"sweep points must be mappings, got {pt!r}")
        extra = set(pt) - {"label", "synth", "algorithms"}
        if extra:
            raise ConfigError(f"unknown sweep keys {sorted(extra)}")
        for n in pt.get("algorithms", {}):
            if n not in names:
                raise ConfigError(f"sweep overrides algorithm {n!r} that is not listed")
    try:
        points = cfg.points()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synth parameters: {exc}") from exc
    for label, sp, _ in points:
        for n in names:
            if sp.model not in REGISTRY[n].models:
                raise ConfigError(f"algorithm {n!r} does not apply to model {sp.model!r}")
    return cfg
