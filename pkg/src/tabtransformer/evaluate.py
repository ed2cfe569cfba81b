"""AUC, layer-wise linear probes, robustness to corrupted test cells, and embedding export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .errors import EvaluationError
from .rng import stream

if TYPE_CHECKING:
    from .data import EncodedDataset, Schema
    from .model import TabTransformer

POOLINGS = ("concat", "average", "max")
DEFAULT_RATES = (0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties counting one half.

    Computed from average ranks (Mann-Whitney U).
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise EvaluationError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def extract_embeddings(model: "TabTransformer", x_cat: np.ndarray, layer: int, batch_size: int = 1024,
                       impute_mask: np.ndarray | None = None) -> np.ndarray:
    """(n, m, d) embeddings after ``layer`` transformer layers (0 = column embeddings), eval mode."""
    if not 0 <= layer <= model.n_layers:
        raise EvaluationError(f"layer {layer} outside [0, {model.n_layers}]")
    out = []
    with T.no_grad():
        for s in range(0, len(x_cat), batch_size):
            mask = None if impute_mask is None else impute_mask[s:s + batch_size]
            out.append(model.contextual(x_cat[s:s + batch_size], impute_mask=mask, upto=layer)[-1].data)
    if not out:
        return np.zeros((0, model.m, model.d), dtype=model.dtype)
    return np.concatenate(out)


@dataclass
class ProbeSpec:
    layer: int
    pooling: str = "concat"
    include_continuous: bool = True

    def width(self, m: int, d: int, c: int) -> int:
        base = d * m if self.pooling == "concat" else d
        return base + (c if self.include_continuous else 0)


def probe_features(model: "TabTransformer", x_cat, x_cont, spec: ProbeSpec) -> np.ndarray:
    if spec.pooling not in POOLINGS:
        raise EvaluationError(f"pooling must be one of {POOLINGS}")
    E = extract_embeddings(model, x_cat, spec.layer).astype(np.float64)
    if spec.pooling == "concat":
        feats = E.reshape(len(E), -1)
    elif spec.pooling == "average":
        feats = E.mean(axis=1)
    else:
        feats = E.max(axis=1)
    if spec.include_continuous and model.n_cont:
        feats = np.concatenate([feats, np.asarray(x_cont, dtype=np.float64)], axis=1)
    return feats


@dataclass
class ProbeResult:
    layer: int
    pooling: str
    auc: float
    normalized_auc: float


def linear_probe(model: "TabTransformer", layer: int, pooling: str, train: "EncodedDataset",
                 test: "EncodedDataset", reference_auc: float | None = None,
                 include_continuous: bool = True, l2: float = 1e-4) -> ProbeResult:
    """Fit logistic regression on frozen (pooled) layer embeddings of ``train``; score ``test``.

    ``normalized_auc`` divides by ``reference_auc`` (the end-to-end model's
    test AUC) when given.
    """
    from .model import LogisticRegression

    spec = ProbeSpec(layer, pooling, include_continuous)
    Xtr = probe_features(model, train.x_cat, train.x_cont, spec)
    Xte = probe_features(model, test.x_cat, test.x_cont, spec)
    clf = LogisticRegression(l2=l2).fit(Xtr, train.y)
    a = auc(clf.decision_function(Xte), test.y)
    return ProbeResult(layer, pooling, a, a / reference_auc if reference_auc else float("nan"))


@dataclass
class PerturbSpec:
    kind: str = "noise"
    rate: float = 0.0
    seed: int = 0
    imputation: str = "average-embedding"

    def validate(self) -> None:
        if self.kind not in ("noise", "missing"):
            raise EvaluationError(f"perturbation kind must be noise or missing, got {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise EvaluationError(f"perturbation rate {self.rate} outside [0, 1]")
        if self.imputation not in ("average-embedding", "missing-class"):
            raise EvaluationError(f"unknown imputation {self.imputation!r}")


def perturb(x_cat: np.ndarray, cardinalities, spec: PerturbSpec) -> tuple[np.ndarray, np.ndarray]:
    """Pick each categorical cell independently with probability ``rate``.

    Noise overwrites a picked cell with a uniform draw over its column's
    observed classes (possibly its own value); missing leaves codes alone
    and only reports the mask.  Returns ``(codes, picked_mask)``.
    """
    spec.validate()
    x_cat = np.asarray(x_cat)
    rng = stream(spec.seed, "perturb", spec.kind)
    card = np.asarray(cardinalities, dtype=np.int64)
    picked = (rng.random(x_cat.shape) < spec.rate) & (card > 0)
    if spec.kind == "missing":
        return x_cat.copy(), picked
    draws = rng.integers(1, np.maximum(card, 1) + 1, size=x_cat.shape)
    return np.where(picked, draws, x_cat), picked


@dataclass
class PerturbResult:
    kind: str
    rate: float
    seed: int
    auc: float
    normalized_auc: float
    fraction: float


def perturb_eval(model: "TabTransformer", test: "EncodedDataset", spec: PerturbSpec,
                 clean_auc: float | None = None) -> PerturbResult:
    """Test AUC after corrupting categorical test cells, plus the ratio to the clean AUC."""
    spec.validate()
    if clean_auc is None:
        clean_auc = auc(model.predict_logits(test.x_cat, test.x_cont), test.y)
    codes, picked = perturb(test.x_cat, model.cardinalities, spec)
    mask = None
    if spec.kind == "missing":
        if spec.imputation == "average-embedding":
            mask = picked
        else:
            codes = np.where(picked, 0, codes)
    a = auc(model.predict_logits(codes, test.x_cont, impute_mask=mask), test.y)
    return PerturbResult(spec.kind, spec.rate, spec.seed, a, a / clean_auc, float(picked.mean()) if picked.size else 0.0)


def export_embeddings(model: "TabTransformer", dataset: "EncodedDataset", layer: int, path,
                      schema: "Schema | None" = None) -> tuple[Path, Path]:
    """Write per-cell embeddings and per-class mean embeddings as CSV.

    ``path`` gets one line per (row, column): ``row,column,class,e0..e{d-1}``.
    A sibling ``<stem>.classes.csv`` gets one line per observed class of
    every column with the mean over the rows holding that class (blank
    embedding when no row does).
    """
    path = Path(path)
    E = extract_embeddings(model, dataset.x_cat, layer)
    d = model.d
    if schema is not None:
        names = [c.name for c in schema.categorical]
        labels = [[""] + list(c.classes) for c in schema.categorical]
    else:
        names = [f"cat{i}" for i in range(model.m)]
        labels = [[str(j) for j in range(c + 1)] for c in model.cardinalities]
    ecols = [f"e{j}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "column", "class", *ecols])
        for r in range(len(E)):
            for i in range(model.m):
                w.writerow([r, names[i], labels[i][dataset.x_cat[r, i]], *(repr(float(v)) for v in E[r, i])])
    summary = path.with_name(path.stem + ".classes.csv")
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column", "class", "count", *ecols])
        for i in range(model.m):
            for j in range(1, model.cardinalities[i] + 1):
                rows = dataset.x_cat[:, i] == j
                cnt = int(rows.sum())
                vals = [repr(float(v)) for v in E[rows, i].astype(np.float64).mean(axis=0)] if cnt else [""] * d
                w.writerow([names[i], labels[i][j], cnt, *vals])
    return path, summary


def write_report(path, rows: list[dict]) -> None:
    """Metric report CSV with columns ``spec,value,auc,normalized_auc`` (+ any extra keys)."""
    keys = ["spec", "value", "auc", "normalized_auc"]
    extra = sorted({k for r in rows for k in r} - set(keys))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys + extra, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
