import json

import pytest

from tabtransformer.config import RunConfig, apply_overrides, from_dict, load_config
from tabtransformer.errors import ConfigError

GOLDEN = {
    "model": {"d": 32, "n_layers": 6, "n_heads": 8, "column_embedding": "concat-1/8", "dropout": 0.1,
              "head_hidden": [4, 2], "head_activation": "selu", "head_norm": "none", "ln_eps": 1e-5},
    "train": {"method": "supervised", "lr": 1e-3, "weight_decay": 1e-5, "batch_size": 128, "max_epochs": 300,
              "patience": 15, "seed": 0, "er_lambda": 0.5, "pl_alpha_f": 3.0, "pl_t1": 30, "pl_t2": 70},
    "pretrain": {"objective": "rtd", "k": 30.0, "dynamic": True, "shared_rtd_head": False, "max_epochs": 100,
                 "patience": 15, "holdout": 0.1},
}


def test_golden_defaults():
    d = RunConfig().to_dict()
    for section, body in GOLDEN.items():
        assert d[section] == body, section
    assert d["eval"]["rates"] == [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0]
    assert d["eval"]["imputation"] == "average-embedding"
    assert RunConfig().model.identifier_dim() == 4


def test_dict_round_trip():
    cfg = RunConfig()
    assert from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        from_dict({"model": {"depth": 3}})
    with pytest.raises(ConfigError):
        from_dict({"optimizer": {}})


def test_type_errors_rejected():
    with pytest.raises(ConfigError):
        from_dict({"model": {"d": "big"}})
    with pytest.raises(ConfigError):
        from_dict({"pretrain": {"dynamic": 1}})


def test_overrides_parse_values():
    cfg = apply_overrides(RunConfig(), [("model.n_layers", "0"), ("train.lr", "0.01"), ("data.csv", "x.csv"),
                                        ("pretrain.dynamic", "false"), ("data.target", "123")])
    assert cfg.model.n_layers == 0 and cfg.train.lr == 0.01 and cfg.data.csv == "x.csv"
    assert cfg.pretrain.dynamic is False and cfg.data.target == "123"


def test_validation():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("model.n_heads", "5")])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("train.method", "magic")])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("pretrain.k", "120")])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("nodot", "1")])


def test_load_config_file(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"output_dir": "o", "model": {"d": 16, "n_heads": 4}}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.output_dir == "o" and cfg.model.d == 16
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
