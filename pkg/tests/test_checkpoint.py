import struct

import numpy as np
import pytest

from tabtransformer.checkpoint import (MAGIC, dumps, load_checkpoint, loads, make_checkpoint,
                                       model_from_checkpoint, save_checkpoint)
from tabtransformer.errors import DataError, FingerprintError
from tabtransformer.model import ModelConfig, TabTransformer
from tabtransformer.optim import AdamWState, adamw_step

FP = "a" * 64


def model_and_rows(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    cards = [3, 7, 2, 5]
    model = TabTransformer(cards, 2, ModelConfig(d=16, n_layers=2, n_heads=4), seed=seed)
    for p in model.parameters():
        p.data += rng.normal(0, 0.1, size=p.shape).astype(p.dtype)  # move away from init
    x = np.stack([rng.integers(0, c + 1, size=n) for c in cards], axis=1)
    return model, x, rng.normal(size=(n, 2)).astype(np.float32)


def test_round_trip_predictions_bit_identical(tmp_path):
    model, x, xc = model_and_rows()
    save_checkpoint(tmp_path / "m.tabt", make_checkpoint(model, "supervised", FP, {"note": 1}))
    back = model_from_checkpoint(load_checkpoint(tmp_path / "m.tabt", expected_fingerprint=FP))
    assert np.array_equal(back.predict_logits(x, xc), model.predict_logits(x, xc))


def test_fingerprint_mismatch_refused():
    model, _, _ = model_and_rows(10)
    blob = dumps(make_checkpoint(model, "supervised", FP))
    with pytest.raises(FingerprintError):
        loads(blob, expected_fingerprint="b" * 64)


def test_layout_header_and_little_endian_floats():
    model, _, _ = model_and_rows(10)
    blob = dumps(make_checkpoint(model, "finetune", FP))
    assert blob[:4] == MAGIC and struct.unpack("<I", blob[4:8])[0] == 1
    n = struct.unpack("<I", blob[8:12])[0]
    assert blob[12:12 + n] == b"finetune"
    name = b"embed.table"
    pos = blob.index(name) + len(name)
    ndim = struct.unpack("<I", blob[pos:pos + 4])[0]
    dims = struct.unpack(f"<{ndim}I", blob[pos + 4:pos + 4 + 4 * ndim])
    first = np.frombuffer(blob[pos + 4 + 4 * ndim:pos + 8 + 4 * ndim], dtype="<f4")[0]
    assert dims == model.params["embed.table"].shape
    assert first == model.params["embed.table"].data.reshape(-1)[0]


def test_config_snapshot_and_phase_preserved():
    model, _, _ = model_and_rows(10)
    ck = loads(dumps(make_checkpoint(model, "pretrain-rtd", FP, {"train": {"lr": 0.5}},
                                     extra_params={"pretrain.rtd.w": np.ones((4, 16), np.float32)})))
    assert ck.phase == "pretrain-rtd" and ck.config["run_config"]["train"]["lr"] == 0.5
    assert np.array_equal(ck.params["pretrain.rtd.w"], np.ones((4, 16)))
    assert model_from_checkpoint(ck).num_parameters() == model.num_parameters()


def test_optimizer_state_round_trip():
    model, _, _ = model_and_rows(10)
    state = AdamWState(lr=0.01)
    adamw_step(model.parameters(), [np.ones_like(p.data) for p in model.parameters()], state)
    ck = loads(dumps(make_checkpoint(model, "supervised", FP, optimizer=state)))
    assert ck.optimizer["t"] == 1
    assert np.array_equal(ck.optimizer["m"]["head.b0"], state.m[list(model.params).index("head.b0")])


def test_corrupt_files_rejected():
    model, _, _ = model_and_rows(10)
    blob = dumps(make_checkpoint(model, "supervised", FP))
    with pytest.raises(DataError):
        loads(b"NOPE" + blob[4:])
    with pytest.raises(DataError):
        loads(blob[:-10])
    with pytest.raises(ValueError):
        make_checkpoint(model, "bogus", FP)
