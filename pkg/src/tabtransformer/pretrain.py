"""Masked-cell (MLM) and replaced-cell detection (RTD) objectives on categorical columns."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, build_model
from .errors import FingerprintError
from .model import TabTransformer
from .rng import stream
from .tensor import Tensor

HEAD_INIT_STD = 0.02


def corruption_count(k: float, m: int) -> int:
    """Cells corrupted per row: round-half-up of k% of m, at least one when k > 0."""
    if not 0 <= k <= 100:
        raise ValueError(f"k must lie in [0, 100], got {k}")
    if k == 0 or m == 0:
        return 0
    return max(1, int(math.floor(k * m / 100.0 + 0.5)))


@dataclass
class CorruptionPlan:
    """Which cells of each row were corrupted, and what they held before."""

    mask: np.ndarray  # (n, m) bool
    original: np.ndarray  # (n, m) int codes before corruption
    k: float
    dynamic: bool = True
    injected: np.ndarray | None = None  # RTD only: codes written into the cells
    replaced: np.ndarray | None = None  # RTD only: injected != original

    def columns(self, row: int) -> np.ndarray:
        return np.flatnonzero(self.mask[row])

    def subset(self, rows) -> "CorruptionPlan":
        pick = (lambda a: None if a is None else a[rows])
        return CorruptionPlan(self.mask[rows], self.original[rows], self.k, self.dynamic,
                              pick(self.injected), pick(self.replaced))


def _select_cells(n: int, eligible: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    m = eligible.size
    mask = np.zeros((n, m), dtype=bool)
    count = min(count, int(eligible.sum()))
    if count == 0 or n == 0:
        return mask
    keys = rng.random((n, m))
    keys[:, ~eligible] = np.inf
    chosen = np.argsort(keys, axis=1, kind="stable")[:, :count]
    np.put_along_axis(mask, chosen, True, axis=1)
    return mask


def mlm_corrupt(x_cat: np.ndarray, k: float, rng: np.random.Generator,
                dynamic: bool = True) -> tuple[np.ndarray, CorruptionPlan]:
    """Mask ``corruption_count(k, m)`` uniformly chosen cells per row as missing (code 0)."""
    x_cat = np.asarray(x_cat)
    n, m = x_cat.shape
    mask = _select_cells(n, np.ones(m, dtype=bool), corruption_count(k, m), rng)
    corrupted = np.where(mask, 0, x_cat)
    return corrupted, CorruptionPlan(mask, x_cat.copy(), k, dynamic)


def rtd_corrupt(x_cat: np.ndarray, k: float, rng: np.random.Generator, cardinalities: Sequence[int],
                dynamic: bool = True) -> tuple[np.ndarray, CorruptionPlan]:
    """Overwrite chosen cells with a uniform draw from the column's observed classes 1..d_i.

    Columns with fewer than two classes are never chosen.  The replaced flag
    records actual change, so a draw equal to the original is labelled
    "not replaced".
    """
    x_cat = np.asarray(x_cat)
    n, m = x_cat.shape
    card = np.asarray(cardinalities, dtype=np.int64)
    eligible = card >= 2
    if not eligible.all():
        warnings.warn(f"RTD skips {int((~eligible).sum())} column(s) with fewer than two classes", stacklevel=2)
    mask = _select_cells(n, eligible, corruption_count(k, m), rng)
    draws = rng.integers(1, np.maximum(card, 1) + 1, size=(n, m))
    corrupted = np.where(mask, draws, x_cat)
    replaced = corrupted != x_cat
    return corrupted, CorruptionPlan(mask, x_cat.copy(), k, dynamic, injected=np.where(mask, draws, 0),
                                     replaced=replaced)


def corruption_stream(seed: int, objective: str, epoch: int, dynamic: bool) -> np.random.Generator:
    """Dynamic plans draw a fresh stream each epoch; static plans always reuse epoch 0's."""
    return stream(seed, "corrupt", objective, epoch if dynamic else 0)


class PretrainHeads:
    """Per-column output heads used only during pre-training.

    MLM: column i gets a linear map d -> d_i over its observed classes (the
    missing class is never a target).  RTD: column i gets a linear map
    d -> 1, or all columns share one when ``shared`` is set.
    """

    def __init__(self, objective: str, cardinalities: Sequence[int], d: int, shared: bool = False,
                 seed: int = 0, dtype=None):
        if objective not in ("mlm", "rtd"):
            raise ValueError(f"objective must be mlm or rtd, got {objective!r}")
        self.objective = objective
        self.cardinalities = [int(c) for c in cardinalities]
        self.d = d
        self.shared = shared
        rng = stream(seed, "pretrain-head", objective)
        dtype = dtype or T.get_default_dtype()
        self.params: dict[str, Tensor] = {}

        def add(name, shape):
            self.params[name] = T.parameter(rng.normal(0.0, HEAD_INIT_STD, size=shape), name=name, dtype=dtype)

        m = len(self.cardinalities)
        if objective == "mlm":
            for i, c in enumerate(self.cardinalities):
                if c > 0:
                    add(f"pretrain.mlm.{i}.w", (d, c))
                    add(f"pretrain.mlm.{i}.b", (c,))
        elif shared:
            add("pretrain.rtd.w", (d,))
            add("pretrain.rtd.b", (1,))
        else:
            add("pretrain.rtd.w", (m, d))
            add("pretrain.rtd.b", (m,))

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def rtd_logits(self, H: Tensor) -> Tensor:
        B, m, d = H.shape
        w, b = self.params["pretrain.rtd.w"], self.params["pretrain.rtd.b"]
        if self.shared:
            return (H @ w.reshape(d, 1)).reshape(B, m) + b
        return (H * w).sum(axis=2) + b


def mlm_loss(H: Tensor, plan: CorruptionPlan, heads: PretrainHeads) -> Tensor:
    """Mean cross-entropy over masked cells whose original value was observed.

    Each cell is scored by its column's head applied to that cell's
    contextual embedding; targets are original codes shifted to 0..d_i-1.
    """
    B, m, d = H.shape
    flat = H.reshape(B * m, d)
    parts, total = [], 0
    for i in range(m):
        rows = np.flatnonzero(plan.mask[:, i] & (plan.original[:, i] > 0))
        if rows.size == 0:
            continue
        h = T.index_select(flat, rows * m + i)
        logits = h @ heads.params[f"pretrain.mlm.{i}.w"] + heads.params[f"pretrain.mlm.{i}.b"]
        parts.append(T.cross_entropy(logits, plan.original[rows, i] - 1) * float(rows.size))
        total += rows.size
    if total == 0:
        warnings.warn("no scorable masked cells in batch; MLM loss defined as zero", stacklevel=2)
        return H.sum() * 0.0
    loss = parts[0]
    for p in parts[1:]:
        loss = loss + p
    return loss * (1.0 / total)


def rtd_loss(H: Tensor, plan: CorruptionPlan, heads: PretrainHeads) -> Tensor:
    """Mean binary cross-entropy of the replaced flag over every cell."""
    return T.bce_with_logits(heads.rtd_logits(H), plan.replaced)


def rtd_accuracy(H: Tensor, plan: CorruptionPlan, heads: PretrainHeads) -> float:
    pred = heads.rtd_logits(H).data >= 0
    return float(np.mean(pred == plan.replaced))


def finetune_init(ckpt: Checkpoint, schema_fingerprint: str) -> TabTransformer:
    """Model for fine-tuning: embeddings and transformer from ``ckpt``, a freshly initialized head.

    The head is drawn from the same seed stream a from-scratch model would
    use, so pre-training never changes head initialization.
    """
    if ckpt.schema_fingerprint != schema_fingerprint:
        raise FingerprintError(
            f"checkpoint schema {ckpt.schema_fingerprint[:16]}... does not match data schema {schema_fingerprint[:16]}...")
    model = build_model(ckpt.config["model"])
    for name, p in model.params.items():
        if name.startswith(("embed.", "layers.")):
            p.data[...] = ckpt.params[name]
    return model
