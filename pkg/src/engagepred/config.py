"""Pipeline configuration: embedded defaults, YAML file, environment overrides."""
from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Mapping

import yaml

ENV_PREFIX = "ENGAGEPRED_"

DEFAULTS_YAML = """\
seed: 42
workers: 1

paths:
  submissions: null       # JSONL dump, or a list of shards; defaults to the synth output
  comments: null
  metadata: null          # community,subscribers,created_utc
  atlas: null             # one community per line
  labels: null            # ready-made community,label,provenance file (skips atlas + matching)
  seed_labels: null       # manually labeled seed for bootstrapping
  patterns: null          # one regular expression per line

windows:                  # half-open [start, end) unix seconds
  ds1: {start: 1475280000, end: 1491004800}
  ds2: {start: 1491004800, end: 1491264000}

labeling:
  size_metric: submissions
  bootstrap: false
  confidence_threshold: 0.95
  max_iterations: 3

features:
  vocab_size: 300
  submission_cap: 10000
  exact_betweenness_limit: 50000
  sampled_pivots: 1024
  min_cut_limit: 20000

models:
  gbt: {n_trees: 100, max_depth: 3, learning_rate: 0.1, min_samples_leaf: 2}
  mlp: {hidden: 150, max_epochs: 10, batch_size: 32, learning_rate: 0.001,
        early_stopping: true, patience: 2, validation_fraction: 0.1}

train:
  model: gbt
  blocks: [L, M, N]

evaluate:
  k: 5
  models: [gbt, mlp]
  subsets: [[L], [M], [N], [M, N], [L, M], [L, M, N]]
  top_errors: 10

explain:
  top_k: 10
  top_features: 20
  permutations: 1000
  waterfall: []           # communities to decompose; empty = highest scored

synth:
  n_communities: 400
  positive_fraction: 0.5
  delta_l: 0.02
  delta_m: 2.5
  delta_n: 0.9
  atlas_fraction: 0.8
"""

# keys whose default is null or a list accept these types
_NULLABLE_TYPES = {
    "paths": (str, list),
}


class ConfigError(ValueError):
    """Schema violation; the message names the offending key path."""


def defaults() -> dict:
    return yaml.safe_load(DEFAULTS_YAML)


def _merge(base: dict, override: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _check_types(cfg: Mapping, ref: Mapping, path: str = "") -> None:
    for key, default in ref.items():
        value, where = cfg[key], f"{path}{key}"
        if isinstance(default, dict):
            _check_types(value, default, where + ".")
        elif default is None:
            allowed = _NULLABLE_TYPES.get(path.rstrip("."), (str,))
            if value is not None and not isinstance(value, allowed):
                raise ConfigError(f"{where}: expected a path, got {value!r}")
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}: expected true/false, got {value!r}")
        elif isinstance(default, (int, float)):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            if ok and isinstance(default, int) and not isinstance(value, int):
                ok = float(value).is_integer()
            if not ok:
                raise ConfigError(f"{where}: expected a number, got {value!r}")
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise ConfigError(f"{where}: expected a list, got {value!r}")
        elif not isinstance(value, type(default)):
            raise ConfigError(f"{where}: expected {type(default).__name__}, got {value!r}")


def _check_semantics(cfg: Mapping) -> None:
    w = cfg["windows"]
    for name in ("ds1", "ds2"):
        if not w[name]["start"] < w[name]["end"]:
            raise ConfigError(f"windows.{name}: start must precede end")
    if w["ds1"]["start"] > w["ds2"]["start"]:
        raise ConfigError("windows.ds1: must precede windows.ds2")
    if cfg["labeling"]["size_metric"] not in ("submissions", "subscribers"):
        raise ConfigError("labeling.size_metric: expected submissions or subscribers")
    if not 0 < cfg["labeling"]["confidence_threshold"] < 1:
        raise ConfigError("labeling.confidence_threshold: must lie in (0, 1)")
    if cfg["train"]["model"] not in ("gbt", "mlp"):
        raise ConfigError("train.model: expected gbt or mlp")
    for i, m in enumerate(cfg["evaluate"]["models"]):
        if m not in ("gbt", "mlp"):
            raise ConfigError(f"evaluate.models[{i}]: expected gbt or mlp, got {m!r}")
    blocks = [("train.blocks", cfg["train"]["blocks"])]
    blocks += [(f"evaluate.subsets[{i}]", s) for i, s in enumerate(cfg["evaluate"]["subsets"])]
    for where, b in blocks:
        if not isinstance(b, list) or not b or not set(b) <= {"L", "M", "N"}:
            raise ConfigError(f"{where}: expected a non-empty list drawn from L, M, N")
    if cfg["evaluate"]["k"] < 2:
        raise ConfigError("evaluate.k: must be at least 2")
    if cfg["workers"] < 1:
        raise ConfigError("workers: must be at least 1")


def env_overrides(environ: Mapping[str, str] | None = None) -> dict:
    """``ENGAGEPRED_MODELS__GBT__N_TREES=50`` -> ``{"models": {"gbt": {"n_trees": 50}}}``."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX):].lower().split("__")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(environ[key])
    return out


def load_config(path: str | Path | None = None, overrides: Mapping | None = None,
                environ: Mapping[str, str] | None = None) -> dict:
    """Defaults < config file < environment < explicit overrides."""
    cfg = defaults()
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, doc)
    cfg = _merge(cfg, env_overrides(environ))
    cfg = _merge(cfg, overrides or {})
    _check_types(cfg, defaults())
    _check_semantics(cfg)
    return cfg


def dump(cfg: Mapping) -> str:
    return yaml.safe_dump(dict(cfg), sort_keys=False, default_flow_style=None)
