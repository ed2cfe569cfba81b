"""Scaled experiments shared by ``scripts/`` and the acceptance suite.

Each function runs one seed of one experiment end to end (data generation or
loading, splitting, training, evaluation) and returns plain numbers, so the
callers only aggregate and print.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import make_checkpoint
from .data import EncodedDataset, RawTable, encode, fit_schema, load_csv, semisup_split, split
from .evaluate import PerturbSpec, auc, linear_probe, perturb_eval
from .model import LogisticRegression, ModelConfig, TabTransformer, baseline_mlp, one_hot_features
from .pretrain import finetune_init
from .synthetic import cluster_table, xor_table
from .train import PretrainConfig, TrainConfig, train_pretrain, train_supervised


@dataclass
class Prepared:
    train: EncodedDataset
    val: EncodedDataset
    test: EncodedDataset
    cardinalities: list
    n_cont: int
    fingerprint: str
    extra: dict = field(default_factory=dict)


def prepare_table(table: RawTable, seed: int, target: str = "y", **schema_kw) -> Prepared:
    """65/15/20 split, schema fitted on the training rows, encoded partitions."""
    sp = split(len(table), seed)
    schema = fit_schema(table, sp.train, target, **schema_kw)
    ds = encode(table, schema)
    return Prepared(ds.subset(sp.train), ds.subset(sp.val), ds.subset(sp.test), schema.cardinalities,
                    len(schema.continuous), schema.fingerprint(), {"split": sp, "encoded": ds})


def test_auc(model: TabTransformer, ds: EncodedDataset) -> float:
    return auc(model.predict_logits(ds.x_cat, ds.x_cont), ds.y)


def logistic_regression_auc(data: Prepared) -> float:
    Xtr = one_hot_features(data.train.x_cat, data.cardinalities, data.train.x_cont)
    Xte = one_hot_features(data.test.x_cat, data.cardinalities, data.test.x_cont)
    return auc(LogisticRegression().fit(Xtr, data.train.y).decision_function(Xte), data.test.y)


# ---------------------------------------------------------------------------
# interaction benchmark


@dataclass
class XorResult:
    seed: int
    lr_auc: float
    tt_auc: float
    best_epoch: int
    epochs_run: int
    probe_aucs: list  # concat-pooled linear probe test AUC for layers 0..N
    seconds: float


def xor_benchmark(seed: int, n: int = 4000, n_noise: int = 5, max_epochs: int = 200,
                  config: ModelConfig | None = None, probes: bool = True) -> XorResult:
    """Label = parity XOR of two categorical columns, plus noise columns; LR vs TabTransformer."""
    t0 = time.perf_counter()
    data = prepare_table(xor_table(n=n, n_noise=n_noise, seed=seed), seed)
    lr = logistic_regression_auc(data)
    model = TabTransformer(data.cardinalities, data.n_cont, config or ModelConfig(), seed=seed)
    _, hist = train_supervised(model, data.train, data.val, TrainConfig(seed=seed, max_epochs=max_epochs))
    tt = test_auc(model, data.test)
    probe = []
    if probes:
        probe = [linear_probe(model, layer, "concat", data.train, data.test).auc for layer in range(model.n_layers + 1)]
    return XorResult(seed, lr, tt, hist.best_epoch, len(hist.records), probe, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# semi-supervised pre-training


@dataclass
class SemiSupervisedResult:
    seed: int
    scratch_auc: float
    pretrained_auc: float
    pretrain_epochs: int
    pretrain_val_acc: float
    seconds: float


def semi_supervised_trial(seed: int, n_labeled: int = 50, n_unlabeled: int = 5000, pretrain_epochs: int = 20,
                          config: ModelConfig | None = None, table_kw: dict | None = None) -> SemiSupervisedResult:
    """From-scratch training on ``n_labeled`` rows vs RTD pre-training on the rest of the training split then fine-tuning.

    The data is :func:`cluster_table`, whose label-relevant structure is
    visible in unlabeled rows.  The table is sized so that the 65% training split holds exactly
    ``n_labeled + n_unlabeled`` rows.
    """
    t0 = time.perf_counter()
    config = config or ModelConfig()
    n_train = n_labeled + n_unlabeled
    n = _rows_for_train_size(n_train)
    table = cluster_table(n=n, seed=seed, **(table_kw or {}))
    data = prepare_table(table, seed)
    lab, unl = semisup_split(data.extra["split"], n_labeled)
    full = data.extra["encoded"]
    labeled, unlabeled = full.subset(lab), full.subset(unl)
    cfg = TrainConfig(seed=seed)

    scratch = TabTransformer(data.cardinalities, data.n_cont, config, seed=seed)
    train_supervised(scratch, labeled, data.val, cfg)

    pre = TabTransformer(data.cardinalities, data.n_cont, config, seed=seed)
    _, hist = train_pretrain(pre, unlabeled.x_cat, PretrainConfig("rtd", max_epochs=pretrain_epochs), cfg)
    tuned = finetune_init(make_checkpoint(pre, "pretrain-rtd", data.fingerprint), data.fingerprint)
    train_supervised(tuned, labeled, data.val, cfg)
    best = hist.records[hist.best_epoch - 1].extra.get("val_acc", float("nan")) if hist.records else float("nan")
    return SemiSupervisedResult(seed, test_auc(scratch, data.test), test_auc(tuned, data.test), len(hist.records),
                                best, time.perf_counter() - t0)


def _rows_for_train_size(n_train: int) -> int:
    """Smallest table size whose 65/15/20 split leaves exactly ``n_train`` training rows.

    The training size moves by -1, 0 or +1 per added row, so an upward scan
    from just below ``n_train / 0.65`` finds it.
    """
    n = max(20, int(n_train / 0.65) - 5)
    while n - math.floor(0.15 * n) - math.floor(0.20 * n) != n_train:
        n += 1
    return n


# ---------------------------------------------------------------------------
# robustness


@dataclass
class RobustnessResult:
    seed: int
    kind: str
    rate: float
    tt_clean: float
    mlp_clean: float
    tt_auc: float  # mean over perturbation seeds
    mlp_auc: float
    tt_rate0: float
    mlp_rate0: float
    seconds: float

    @property
    def tt_normalized(self) -> float:
        return self.tt_auc / self.tt_clean

    @property
    def mlp_normalized(self) -> float:
        return self.mlp_auc / self.mlp_clean


def robustness_trial(seed: int, table: RawTable | None = None, kind: str = "noise", rate: float = 0.5,
                     n_perturb: int = 5, config: ModelConfig | None = None, max_epochs: int = 300,
                     table_kw: dict | None = None) -> RobustnessResult:
    """Train TabTransformer and the baseline MLP on one table; evaluate both on perturbed test cells.

    The default table is a 5,000-row :func:`cluster_table`.
    """
    t0 = time.perf_counter()
    config = config or ModelConfig()
    table = table if table is not None else cluster_table(n=5000, seed=seed, **(table_kw or {}))
    data = prepare_table(table, seed)
    cfg = TrainConfig(seed=seed, max_epochs=max_epochs)
    out = {}
    for name, build in (("tt", TabTransformer), ("mlp", baseline_mlp)):
        model = build(data.cardinalities, data.n_cont, config, seed=seed)
        train_supervised(model, data.train, data.val, cfg)
        clean = test_auc(model, data.test)
        runs = [perturb_eval(model, data.test, PerturbSpec(kind, rate, s), clean).auc for s in range(n_perturb)]
        zero = perturb_eval(model, data.test, PerturbSpec(kind, 0.0, 0), clean).auc
        out[name] = (clean, float(np.mean(runs)), zero)
    return RobustnessResult(seed, kind, rate, out["tt"][0], out["mlp"][0], out["tt"][1], out["mlp"][1],
                            out["tt"][2], out["mlp"][2], time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# income dataset


INCOME_TARGET = "income"


@dataclass
class IncomeResult:
    seed: int
    tt_auc: float
    mlp_auc: float
    tt_epochs: int
    mlp_epochs: int
    seconds: float


def income_reproduction(csv_path, seed: int = 0, config: ModelConfig | None = None,
                        target: str = INCOME_TARGET, max_epochs: int = 300) -> IncomeResult:
    """Default TabTransformer and baseline MLP on the income table with the 65/15/20 split."""
    t0 = time.perf_counter()
    table = load_csv(csv_path)
    data = prepare_table(table, seed, target=target)
    cfg = TrainConfig(seed=seed, max_epochs=max_epochs)
    config = config or ModelConfig()
    tt = TabTransformer(data.cardinalities, data.n_cont, config, seed=seed)
    _, htt = train_supervised(tt, data.train, data.val, cfg)
    mlp = baseline_mlp(data.cardinalities, data.n_cont, dataclasses.replace(config), seed=seed)
    _, hmlp = train_supervised(mlp, data.train, data.val, cfg)
    return IncomeResult(seed, test_auc(tt, data.test), test_auc(mlp, data.test), len(htt.records),
                        len(hmlp.records), time.perf_counter() - t0)
