"""Training loops: supervised, pre-training, and the two semi-supervised wrappers."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import EncodedDataset
from .errors import TrainingError
from .evaluate import auc
from .model import TabTransformer
from .optim import AdamWState, adamw_step
from .pretrain import (PretrainHeads, corruption_stream, mlm_corrupt, mlm_loss, rtd_corrupt, rtd_loss)
from .rng import stream

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 128
    max_epochs: int = 300
    patience: int = 15
    seed: int = 0
    er_lambda: float = 0.5
    pl_alpha_f: float = 3.0
    pl_t1: int = 30
    pl_t2: int = 70


@dataclass
class PretrainConfig:
    objective: str = "rtd"
    k: float = 30.0
    dynamic: bool = True
    shared_rtd_head: bool = False
    max_epochs: int = 100
    patience: int = 15
    holdout: float = 0.1


def pl_alpha(t: int, alpha_f: float = 3.0, t1: int = 30, t2: int = 70) -> float:
    """Pseudo-label weight: 0 before t1, linear ramp to alpha_f at t2, then flat."""
    if t1 >= t2:
        raise ValueError("pseudo-label schedule needs t1 < t2")
    if t < t1:
        return 0.0
    if t < t2:
        return alpha_f * (t - t1) / (t2 - t1)
    return alpha_f


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    lr: float
    alpha: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass
class TrainHistory:
    metric: str = "val_auc"
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    stop_reason: str = ""

    def values(self) -> list[float]:
        return [r.val_metric for r in self.records]

    def to_csv(self, path) -> None:
        extra_keys = sorted({k for r in self.records for k in r.extra})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", self.metric, "lr", "alpha", *extra_keys])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_metric), repr(r.lr), repr(r.alpha),
                            *(repr(r.extra.get(k, "")) for k in extra_keys)])


class EarlyStopping:
    """Tracks the best value seen; signals a stop after ``patience`` epochs without strict improvement."""

    def __init__(self, patience: int = 15, mode: str = "max"):
        self.patience = patience
        self.sign = 1.0 if mode == "max" else -1.0
        self.best = -np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, value: float) -> bool:
        self.epoch += 1
        if self.sign * value > self.best:
            self.best = self.sign * value
            self.best_epoch = self.epoch
            return True
        return False

    @property
    def best_value(self) -> float:
        return self.sign * self.best

    @property
    def should_stop(self) -> bool:
        return self.epoch - self.best_epoch >= self.patience


def _batches(n: int, batch_size: int, order: np.ndarray):
    for s in range(0, n, batch_size):
        yield order[s:s + batch_size]


class _Cycler:
    """Endless shuffled batches over ``n`` rows; reshuffles on each pass from its own stream."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self.passes = 0
        self.pos = 0
        self.order = self._new_order()

    def _new_order(self):
        self.passes += 1
        return stream(self.seed, "unlabeled-order", self.passes).permutation(self.n)

    def next(self) -> np.ndarray:
        if self.pos >= self.n:
            self.order, self.pos = self._new_order(), 0
        out = self.order[self.pos:self.pos + self.batch_size]
        self.pos += self.batch_size
        return out


def _check_labels(y: np.ndarray, what: str) -> None:
    if len(np.unique(y)) < 2:
        raise TrainingError(f"{what} contains a single class; AUC is undefined")


def _run(model: TabTransformer, n_train: int, step_loss, validate, cfg: TrainConfig, params,
         mode: str = "max", metric: str = "val_auc", alpha_of=lambda epoch: 0.0):
    """Shared epoch loop. ``step_loss(rows, epoch, rng) -> Tensor``; ``validate() -> (value, extra)``."""
    opt = AdamWState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience, mode)
    hist = TrainHistory(metric=metric)
    best_state = {k: p.data.copy() for k, p in params.items()}
    plist = list(params.values())
    hist.stop_reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        order = stream(cfg.seed, "order", epoch).permutation(n_train)
        rng = stream(cfg.seed, "dropout", epoch)
        total, count = 0.0, 0
        for rows in _batches(n_train, cfg.batch_size, order):
            with T.Tape() as tape:
                loss = step_loss(rows, epoch, rng)
            try:
                adamw_step(plist, tape.gradient(loss, plist), opt)
            except FloatingPointError as exc:
                raise TrainingError(str(exc)) from exc
            total += loss.item() * len(rows)
            count += len(rows)
        value, extra = validate()
        improved = stopper.update(value)
        hist.records.append(EpochRecord(epoch, total / max(count, 1), value, cfg.lr, alpha_of(epoch), extra))
        if improved:
            best_state = {k: p.data.copy() for k, p in params.items()}
        log.debug("epoch %d loss %.5f %s %.5f", epoch, total / max(count, 1), metric, value)
        if stopper.should_stop:
            hist.stop_reason = "early_stopping"
            break
    hist.best_epoch = stopper.best_epoch
    hist.best_metric = stopper.best_value
    for k, p in params.items():
        p.data[...] = best_state[k]
    return best_state, hist, opt


def _val_auc(model: TabTransformer, val: EncodedDataset):
    def validate():
        return auc(model.predict_logits(val.x_cat, val.x_cont), val.y), {}
    return validate


def train_supervised(model: TabTransformer, train: EncodedDataset, val: EncodedDataset, cfg: TrainConfig):
    """Mini-batch AdamW on the logistic loss with early stopping on validation AUC.

    The model is left holding its best-validation weights; returns
    ``(best_state, history)``.
    """
    if len(train) == 0:
        raise TrainingError("empty training set")
    _check_labels(train.y, "training data")
    _check_labels(val.y, "validation data")

    def step_loss(rows, epoch, rng):
        return model.loss(train.x_cat[rows], train.x_cont[rows], train.y[rows], training=True, rng=rng)

    best, hist, _ = _run(model, len(train), step_loss, _val_auc(model, val), cfg, model.params)
    return best, hist


def _semi(model, labeled, unlabeled, val, cfg, unlabeled_term, alpha_of):
    if len(unlabeled) == 0:
        warnings.warn("no unlabeled rows; falling back to supervised training", stacklevel=3)
        return train_supervised(model, labeled, val, cfg)
    _check_labels(labeled.y, "labeled data")
    _check_labels(val.y, "validation data")
    cycler = _Cycler(len(unlabeled), cfg.batch_size, cfg.seed)
    # the unlabeled pass draws dropout from its own stream so the supervised part is unchanged
    urngs: dict[int, np.random.Generator] = {}

    def step_loss(rows, epoch, rng):
        sup = model.loss(labeled.x_cat[rows], labeled.x_cont[rows], labeled.y[rows], training=True, rng=rng)
        urng = urngs.setdefault(epoch, stream(cfg.seed, "dropout-unlabeled", epoch))
        urows = cycler.next()
        logits = model.forward(unlabeled.x_cat[urows], unlabeled.x_cont[urows], training=True, rng=urng)
        return sup + unlabeled_term(logits, epoch)

    best, hist, _ = _run(model, len(labeled), step_loss, _val_auc(model, val), cfg, model.params,
                         alpha_of=alpha_of)
    return best, hist


def train_entropy_reg(model: TabTransformer, labeled: EncodedDataset, unlabeled: EncodedDataset,
                      val: EncodedDataset, cfg: TrainConfig):
    """Supervised loss plus ``er_lambda`` times the mean prediction entropy on an unlabeled batch."""
    if not 0.0 <= cfg.er_lambda <= 1.0:
        raise TrainingError("er_lambda must lie in [0, 1]")
    lam = cfg.er_lambda
    return _semi(model, labeled, unlabeled, val, cfg,
                 lambda logits, epoch: T.binary_entropy_with_logits(logits) * lam,
                 lambda epoch: lam)


def train_pseudo_label(model: TabTransformer, labeled: EncodedDataset, unlabeled: EncodedDataset,
                       val: EncodedDataset, cfg: TrainConfig):
    """Supervised loss plus alpha(epoch) times the loss against hard pseudo-labels.

    Pseudo-labels are the model's own current predictions on the unlabeled
    batch, thresholded at logit 0 (a tie goes to class 1).
    """
    sched = (cfg.pl_alpha_f, cfg.pl_t1, cfg.pl_t2)
    pl_alpha(0, *sched)

    def term(logits, epoch):
        pseudo = (logits.data >= 0).astype(np.int64)
        return T.bce_with_logits(logits, pseudo) * pl_alpha(epoch, *sched)

    return _semi(model, labeled, unlabeled, val, cfg, term, lambda epoch: pl_alpha(epoch, *sched))


def pseudo_labels(logits: np.ndarray) -> np.ndarray:
    return (np.asarray(logits) >= 0).astype(np.int64)


def train_pretrain(model: TabTransformer, x_cat: np.ndarray, pcfg: PretrainConfig, cfg: TrainConfig):
    """Pre-train embeddings and transformer layers on unlabeled categorical rows.

    A seeded ``holdout`` fraction of rows is kept aside with a fixed
    corruption plan; early stopping minimizes its objective loss.  The MLP
    head is neither used nor updated.  Returns ``(heads, history)`` with the
    model holding the best embeddings/transformer weights.
    """
    x_cat = np.asarray(x_cat)
    if len(x_cat) == 0:
        raise TrainingError("no unlabeled rows to pre-train on")
    obj = pcfg.objective
    card = model.cardinalities
    if obj == "rtd" and all(c < 2 for c in card):
        raise TrainingError("RTD needs at least one column with two or more classes")
    perm = stream(cfg.seed, "pretrain-holdout").permutation(len(x_cat))
    n_val = int(round(pcfg.holdout * len(x_cat))) if len(x_cat) >= 10 else 0
    val_x, tr_x = x_cat[perm[:n_val]], x_cat[perm[n_val:]]
    heads = PretrainHeads(obj, card, model.d, shared=pcfg.shared_rtd_head, seed=model.seed, dtype=model.dtype)

    def corrupt(x, rng):
        if obj == "mlm":
            return mlm_corrupt(x, pcfg.k, rng, pcfg.dynamic)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return rtd_corrupt(x, pcfg.k, rng, card, pcfg.dynamic)

    loss_fn = mlm_loss if obj == "mlm" else rtd_loss
    val_corrupt, val_plan = corrupt(val_x, stream(cfg.seed, "pretrain-val-corrupt")) if n_val else (None, None)
    state = {"epoch": 0}
    cache: dict = {}

    def plan_for(epoch):
        if epoch not in cache:
            cache.clear()
            cache[epoch] = corrupt(tr_x, corruption_stream(cfg.seed, obj, epoch, pcfg.dynamic))
        return cache[epoch]

    acc = {"n": 0, "hit": 0.0}

    def step_loss(rows, epoch, rng):
        if state["epoch"] != epoch:
            state["epoch"] = epoch
            acc.update(n=0, hit=0.0)
        xc, plan = plan_for(epoch)
        sub = plan.subset(rows)
        H = model.contextual(xc[rows], training=True, rng=rng)[-1]
        if obj == "rtd":
            pred = heads.rtd_logits(H).data >= 0
            acc["hit"] += float(np.sum(pred == sub.replaced))
            acc["n"] += sub.replaced.size
        return loss_fn(H, sub, heads)

    def validate():
        extra = {"train_acc": acc["hit"] / acc["n"]} if acc["n"] else {}
        if not n_val:
            return 0.0, extra
        with T.no_grad():
            H = model.contextual(val_corrupt)[-1]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                value = loss_fn(H, val_plan, heads).item()
            if obj == "rtd":
                extra["val_acc"] = float(np.mean((heads.rtd_logits(H).data >= 0) == val_plan.replaced))
        return value, extra

    params = {**model.group("embed."), **model.group("layers."), **heads.params}
    _, hist, _ = _run(model, len(tr_x), step_loss, validate, cfg_for_pretrain(cfg, pcfg), params,
                      mode="min", metric="val_loss")
    return heads, hist


def cfg_for_pretrain(cfg: TrainConfig, pcfg: PretrainConfig) -> TrainConfig:
    from dataclasses import replace

    return replace(cfg, max_epochs=pcfg.max_epochs, patience=pcfg.patience)
