"""Acceptance criteria 1-9, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL|SKIP`` line (visible with or
without ``-s``) before asserting.  Criteria 5-8 train full-size models and
take minutes each; they carry the ``slow`` marker so ``-m "not slow"``
skips them.  Criterion 8 needs the income CSV: set ``TABT_INCOME_CSV`` or
place it at ``/root/data/income.csv``.
"""

import dataclasses
import os
import time
from pathlib import Path

import numpy as np
import pytest

from tabtransformer import tensor as T
from tabtransformer.checkpoint import dumps, loads, make_checkpoint, model_from_checkpoint
from tabtransformer.errors import FingerprintError
from tabtransformer.evaluate import auc
from tabtransformer.experiments import income_reproduction, robustness_trial, semi_supervised_trial, xor_benchmark
from tabtransformer.gradcheck import check_gradients
from tabtransformer.model import ModelConfig, TabTransformer, attention_head, baseline_mlp, baseline_mlp_forward
from tabtransformer.pretrain import (PretrainHeads, corruption_count, corruption_stream, mlm_corrupt, mlm_loss,
                                     rtd_corrupt, rtd_loss)
from tabtransformer.tensor import Tensor

from test_model import _permuted_model

SMALL = ModelConfig(d=8, n_layers=2, n_heads=2)
N_SEEDS = 10


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return report


def random_rows(cards, n, rng, low=0):
    return np.stack([rng.integers(low, c + 1, size=n) for c in cards], axis=1)


def brute_force_auc(scores, labels):
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


# ---- 1: gradient fidelity -----------------------------------------------------

def test_criterion_1_gradient_fidelity(verdict):
    t0 = time.perf_counter()
    worst, where, kinked = 0.0, "", 0
    for cfg_seed in range(50):
        rng = np.random.default_rng(1000 + cfg_seed)
        m, c, n = int(rng.integers(1, 6)), int(rng.integers(0, 3)), int(rng.integers(2, 7))
        cards = rng.integers(1, 6, size=m).tolist()
        mode = ["concat-1/8", "concat-1/4", "add", "none"][cfg_seed % 4]
        with T.default_dtype(np.float64):
            model = TabTransformer(cards, c, dataclasses.replace(SMALL, column_embedding=mode), seed=cfg_seed)
            for p in model.parameters():
                p.data += rng.normal(0, 0.05, size=p.shape)  # leave the exact init values
            x, xc = random_rows(cards, n, rng), rng.normal(size=(n, c))
            y = rng.integers(0, 2, size=n)
            rep = check_gradients(lambda: model.loss(x, xc, y), model.parameters(), rng, entries_per_param=3)
        kinked += rep.n_kinked
        if rep.max_rel_error > worst:
            worst, where = rep.max_rel_error, f"config {cfg_seed} {rep.worst}"
    secs = time.perf_counter() - t0
    verdict(1, worst < 1e-4 and secs < 60,
            f"max rel err {worst:.2e} at {where}; {kinked} kink-straddling checks excluded; {secs:.1f}s")


# ---- 2: AUC oracle ------------------------------------------------------------

def test_criterion_2_auc_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    mismatches, done = 0, 0
    while done < 1000:
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            continue
        scores = rng.integers(0, int(rng.integers(1, 30)), size=n) / 7.0  # coarse grid forces ties
        mismatches += auc(scores, labels) != brute_force_auc(scores, labels)
        done += 1
    secs = time.perf_counter() - t0
    verdict(2, mismatches == 0 and secs < 10, f"{mismatches} mismatches in {done} instances; {secs:.2f}s")


# ---- 3: architecture invariants -----------------------------------------------

def test_criterion_3_architecture_invariants(verdict):
    rng = np.random.default_rng(3)
    cards = [3, 7, 2, 5, 4]
    model = TabTransformer(cards, 3, ModelConfig(), seed=3)
    x, xc = random_rows(cards, 64, rng), rng.normal(size=(64, 3)).astype(np.float32)

    row_err = 0.0
    E = model.contextual(x)
    k = model.d // model.config.n_heads
    for layer in range(model.n_layers):
        P = {n: model.params[f"layers.{layer}.{n}"].data for n in ("wq", "wk", "wv")}
        for r in range(8):
            for h in range(model.config.n_heads):
                cols = slice(h * k, (h + 1) * k)
                _, A = attention_head(Tensor(E[layer].data[r]), *(Tensor(P[n][:, cols]) for n in ("wq", "wk", "wv")))
                row_err = max(row_err, float(np.abs(A.data.sum(-1) - 1).max()))

    width_ok = model.head_input_width == model.d * model.m + 3 == model.params["head.w0"].shape[0]

    equiv_err = 0.0
    for seed in range(5):
        prng = np.random.default_rng(seed)
        perm = prng.permutation(len(cards))
        small = TabTransformer(cards, 2, SMALL, seed=seed)
        other = _permuted_model(small, perm)
        xs, xcs = random_rows(cards, 16, prng), prng.normal(size=(16, 2)).astype(np.float32)
        H, Hp = small.contextual(xs)[-1].data, other.contextual(xs[:, perm])[-1].data
        equiv_err = max(equiv_err, float(np.abs(Hp - H[:, perm]).max()),
                        float(np.abs(other.forward(xs[:, perm], xcs).data - small.forward(xs, xcs).data).max()))

    flat = TabTransformer(cards, 3, dataclasses.replace(ModelConfig(), n_layers=0), seed=9)
    mlp = baseline_mlp(cards, 3, ModelConfig(), seed=9)
    bitwise = np.array_equal(flat.forward(x, xc).data, baseline_mlp_forward(x, xc, mlp).data)

    ok = row_err < 1e-6 and width_ok and equiv_err < 1e-5 and bitwise
    verdict(3, ok, f"attention row err {row_err:.1e}; width {model.head_input_width}; "
                   f"equivariance err {equiv_err:.1e}; N=0 bitwise {bitwise}")


# ---- 4: pre-training mechanics ------------------------------------------------

def test_criterion_4_pretraining_mechanics(verdict):
    problems = []
    x = random_rows([6] * 14, 500, np.random.default_rng(4), low=1)
    for k in (15, 30, 50):
        want = max(1, int(np.floor(k * 14 / 100 + 0.5)))
        if corruption_count(k, 14) != want:
            problems.append(f"count k={k}")
        _, plan = mlm_corrupt(x, k, np.random.default_rng(k))
        if not np.all(plan.mask.sum(1) == want):
            problems.append(f"mlm mask k={k}")
        xr, rplan = rtd_corrupt(x, k, np.random.default_rng(k), [6] * 14)
        if not np.array_equal(rplan.replaced, xr != x) or np.any(rplan.replaced & ~rplan.mask):
            problems.append(f"rtd flags k={k}")

    plan = lambda epoch, dyn: rtd_corrupt(x, 30, corruption_stream(0, "rtd", epoch, dyn), [6] * 14, dyn)[1]
    if np.array_equal(plan(1, True).mask, plan(2, True).mask):
        problems.append("dynamic plans repeat")
    if not all(np.array_equal(plan(1, False).mask, plan(e, False).mask) for e in (2, 5, 50)):
        problems.append("static plans differ")

    cards = [2, 3, 5, 8, 4, 6]
    model = TabTransformer(cards, 0, SMALL, seed=0)
    xb = random_rows(cards, 4096, np.random.default_rng(5), low=1)
    xm, mplan = mlm_corrupt(xb, 30, np.random.default_rng(6))
    xr, rplan = rtd_corrupt(xb, 30, np.random.default_rng(7), cards)
    with T.no_grad():
        lm = mlm_loss(model.contextual(xm)[-1], mplan, PretrainHeads("mlm", cards, model.d)).item()
        lr = rtd_loss(model.contextual(xr)[-1], rplan, PretrainHeads("rtd", cards, model.d)).item()
    chance_mlm = float(np.mean(np.log(np.asarray(cards))[np.nonzero(mplan.mask)[1]]))
    if abs(lm - chance_mlm) > 0.15:
        problems.append(f"mlm loss {lm:.3f} vs {chance_mlm:.3f}")
    if abs(lr - np.log(2)) > 0.05:
        problems.append(f"rtd loss {lr:.3f} vs {np.log(2):.3f}")
    verdict(4, not problems, f"mlm {lm:.3f} (chance {chance_mlm:.3f}), rtd {lr:.3f} (chance {np.log(2):.3f}); "
                             + ("; ".join(problems) or "counts, flags, plans ok"))


# ---- 5: interaction benchmark -------------------------------------------------

@pytest.mark.slow
def test_criterion_5_interaction_benchmark(verdict):
    t0 = time.perf_counter()
    runs = [xor_benchmark(seed) for seed in range(N_SEEDS)]
    secs = time.perf_counter() - t0
    lr, tt = np.array([r.lr_auc for r in runs]), np.array([r.tt_auc for r in runs])
    probe = np.median(np.array([r.probe_aucs for r in runs]), axis=0)
    # thresholds use the criterion's one stated aggregate, the median over seeds; extremes are reported
    ok = (np.median(lr) <= 0.55 and np.median(tt) >= 0.95 and all(r.epochs_run <= 200 for r in runs)
          and bool(np.all(np.diff(probe) >= 0)) and secs < 600)
    verdict(5, ok, f"median LR {np.median(lr):.3f} (range {lr.min():.3f}-{lr.max():.3f}); median TT "
                   f"{np.median(tt):.4f} (min {tt.min():.4f}); median probe by layer "
                   f"{np.round(probe, 4).tolist()}; {secs:.0f}s")


# ---- 6: semi-supervised direction ---------------------------------------------

@pytest.mark.slow
def test_criterion_6_semi_supervised_direction(verdict):
    t0 = time.perf_counter()
    runs = [semi_supervised_trial(seed) for seed in range(N_SEEDS)]
    secs = time.perf_counter() - t0
    scratch = np.array([r.scratch_auc for r in runs])
    tuned = np.array([r.pretrained_auc for r in runs])
    gain = float(np.mean(tuned - scratch))
    ok = np.median(tuned) >= np.median(scratch) and gain > 0 and secs < 1200
    verdict(6, ok, f"median pretrained {np.median(tuned):.4f} vs scratch {np.median(scratch):.4f}; "
                   f"mean gain {gain:+.4f}; {secs:.0f}s")


# ---- 7: robustness direction --------------------------------------------------

@pytest.mark.slow
def test_criterion_7_robustness_direction(verdict):
    runs = [robustness_trial(seed) for seed in range(N_SEEDS)]
    tt = np.median([r.tt_normalized for r in runs])
    mlp = np.median([r.mlp_normalized for r in runs])
    exact = all(r.tt_rate0 == r.tt_clean and r.mlp_rate0 == r.mlp_clean for r in runs)
    verdict(7, tt > mlp and exact, f"median normalized AUC at noise 0.5: TT {tt:.4f} vs MLP {mlp:.4f}; "
                                   f"rate 0 exact {exact}")


# ---- 8: income reproduction ---------------------------------------------------

def _income_csv():
    path = os.environ.get("TABT_INCOME_CSV") or "/root/data/income.csv"
    return Path(path) if Path(path).is_file() else None


@pytest.mark.slow
def test_criterion_8_income_reproduction(verdict, capsys):
    path = _income_csv()
    if path is None:
        with capsys.disabled():
            print("\ncriterion 8: SKIP  income CSV not found (set TABT_INCOME_CSV)")
        pytest.skip("income CSV not available")
    r = income_reproduction(path)
    verdict(8, r.tt_auc >= 0.89 and r.mlp_auc >= 0.88 and r.seconds < 1800,
            f"TT {r.tt_auc:.4f} (>= 0.89), MLP {r.mlp_auc:.4f} (>= 0.88); {r.seconds:.0f}s")


# ---- 9: serialization ---------------------------------------------------------

def test_criterion_9_serialization(verdict):
    rng = np.random.default_rng(9)
    cards = [3, 7, 2, 5]
    model = TabTransformer(cards, 2, ModelConfig(), seed=9)
    for p in model.parameters():
        p.data += rng.normal(0, 0.1, size=p.shape).astype(p.dtype)
    x, xc = random_rows(cards, 1000, rng), rng.normal(size=(1000, 2)).astype(np.float32)
    fp = "f" * 64
    blob = dumps(make_checkpoint(model, "supervised", fp))
    back = model_from_checkpoint(loads(blob, expected_fingerprint=fp))
    same = np.array_equal(back.predict_logits(x, xc), model.predict_logits(x, xc))
    try:
        loads(blob, expected_fingerprint="0" * 64)
        refused = False
    except FingerprintError:
        refused = True
    verdict(9, same and refused, f"bit-identical on 1000 rows {same}; mismatch refused {refused}")
