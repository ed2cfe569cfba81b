"""Run configuration: nested dataclasses loaded from JSON with ``--section.key value`` overrides.

Key grammar of the JSON file (every key optional, unknown keys rejected)::

    {
      "output_dir": "run",
      "data":     {"csv", "target", "has_header", "delimiter", "split_seed", "p", "stratify",
                   "positive_label", "categorical_threshold", "rescaling", "overrides"},
      "model":    {"d", "n_layers", "n_heads", "column_embedding", "dropout", "head_hidden",
                   "head_activation", "head_norm", "ln_eps"},
      "train":    {"method", "lr", "weight_decay", "batch_size", "max_epochs", "patience", "seed",
                   "er_lambda", "pl_alpha_f", "pl_t1", "pl_t2"},
      "pretrain": {"objective", "k", "dynamic", "shared_rtd_head", "max_epochs", "patience", "holdout"},
      "eval":     {"rates", "kinds", "n_seeds", "imputation", "poolings", "probe_include_continuous",
                   "export_layer", "export_split"}
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .evaluate import DEFAULT_RATES, POOLINGS
from .model import ModelConfig
from .train import PretrainConfig, TrainConfig

METHODS = ("supervised", "entropy-reg", "pseudo-label")


@dataclass
class DataConfig:
    csv: str = ""
    target: str = "y"
    has_header: bool = True
    delimiter: str = ","
    split_seed: int = 0
    p: int | None = None
    stratify: bool = False
    positive_label: str | None = None
    categorical_threshold: int = 10
    rescaling: str = "zscore"
    overrides: dict = field(default_factory=dict)


@dataclass
class TrainSection(TrainConfig):
    method: str = "supervised"

    def core(self) -> TrainConfig:
        kw = {f.name: getattr(self, f.name) for f in dataclasses.fields(TrainConfig)}
        return TrainConfig(**kw)


@dataclass
class EvalConfig:
    rates: list = field(default_factory=lambda: list(DEFAULT_RATES))
    kinds: list = field(default_factory=lambda: ["noise", "missing"])
    n_seeds: int = 5
    imputation: str = "average-embedding"
    poolings: list = field(default_factory=lambda: list(POOLINGS))
    probe_include_continuous: bool = True
    export_layer: int = -1
    export_split: str = "test"


@dataclass
class RunConfig:
    output_dir: str = "run"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"]["head_hidden"] = list(d["model"]["head_hidden"])
        return d

    def validate(self) -> None:
        self.model.validate()
        if self.train.method not in METHODS:
            raise ConfigError(f"train.method must be one of {METHODS}")
        if self.pretrain.objective not in ("mlm", "rtd"):
            raise ConfigError("pretrain.objective must be mlm or rtd")
        if not 0 <= self.pretrain.k <= 100:
            raise ConfigError("pretrain.k must lie in [0, 100]")
        if self.train.batch_size < 1 or self.train.max_epochs < 0 or self.train.patience < 1:
            raise ConfigError("train.batch_size and train.patience must be positive")
        if self.train.pl_t1 >= self.train.pl_t2:
            raise ConfigError("train.pl_t1 must be below train.pl_t2")
        if self.data.p is not None and self.data.p < 1:
            raise ConfigError("data.p must be positive")
        for kind in self.eval.kinds:
            if kind not in ("noise", "missing"):
                raise ConfigError(f"unknown eval kind {kind!r}")
        for pool in self.eval.poolings:
            if pool not in POOLINGS:
                raise ConfigError(f"unknown pooling {pool!r}")
        if any(not 0 <= r <= 1 for r in self.eval.rates):
            raise ConfigError("eval.rates must lie in [0, 1]")


SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainSection, "pretrain": PretrainConfig,
            "eval": EvalConfig}


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if not isinstance(value, bool):
            raise ConfigError(f"{where} expects true/false, got {value!r}")
        return value
    if isinstance(default, int) and default is not None:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} expects a list, got {value!r}")
        return tuple(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} expects a list, got {value!r}")
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} expects an object, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} expects a string, got {value!r}")
        return value
    return value  # optional fields default to None


def _apply(cfg: RunConfig, section: str, key: str, value) -> None:
    if section == "output_dir" and key is None:
        if not isinstance(value, str):
            raise ConfigError("output_dir expects a string")
        cfg.output_dir = value
        return
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    obj = getattr(cfg, section)
    names = {f.name for f in dataclasses.fields(obj)}
    if key not in names:
        raise ConfigError(f"unknown config key {section}.{key}")
    setattr(obj, key, _coerce(section, key, value, getattr(obj, key)))


def from_dict(d: dict) -> RunConfig:
    cfg = RunConfig()
    for section, body in d.items():
        if section == "output_dir":
            _apply(cfg, "output_dir", None, body)
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, value in body.items():
            _apply(cfg, section, key, value)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    return from_dict(d)


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: RunConfig, overrides: list[tuple[str, str]]) -> RunConfig:
    """Apply ``("section.key", "value")`` pairs; values parse as JSON when possible, else as strings."""
    for dotted, text in overrides:
        if dotted == "output_dir":
            _apply(cfg, "output_dir", None, text)
            continue
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        obj = getattr(cfg, section, None)
        value = parse_value(text)
        if obj is not None and isinstance(getattr(obj, key, None), str) and not isinstance(value, str):
            value = text
        _apply(cfg, section, key, value)
    cfg.validate()
    return cfg
