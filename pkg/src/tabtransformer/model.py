"""TabTransformer, its transformer-free MLP baseline, and logistic regression."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .rng import stream
from .tensor import Tensor

EMBEDDING_MODES = ("concat-1/4", "concat-1/8", "add", "none")


@dataclass
class ModelConfig:
    d: int = 32
    n_layers: int = 6
    n_heads: int = 8
    column_embedding: str = "concat-1/8"
    dropout: float = 0.1
    head_hidden: tuple = (4, 2)
    head_activation: str = "selu"
    head_norm: str = "none"
    ln_eps: float = 1e-5

    def identifier_dim(self) -> int:
        if self.column_embedding == "add":
            return self.d
        if self.column_embedding == "none":
            return 0
        return self.d // int(self.column_embedding.split("/")[1])

    def validate(self) -> None:
        if self.column_embedding not in EMBEDDING_MODES:
            raise ConfigError(f"column_embedding must be one of {EMBEDDING_MODES}")
        if self.d <= 0 or self.n_layers < 0 or self.n_heads <= 0:
            raise ConfigError("d, n_heads must be positive and n_layers non-negative")
        if self.d % self.n_heads:
            raise ConfigError(f"d={self.d} is not divisible by n_heads={self.n_heads}")
        if self.column_embedding.startswith("concat") and not 0 < self.identifier_dim() < self.d:
            raise ConfigError(f"identifier dimension {self.identifier_dim()} invalid for d={self.d}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.head_activation not in ("selu", "relu"):
            raise ConfigError("head_activation must be selu or relu")
        if self.head_norm not in ("none", "layernorm"):
            raise ConfigError("head_norm must be none or layernorm")


def _uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def attention_head(E: Tensor, w_query: Tensor, w_key: Tensor, w_value: Tensor) -> tuple[Tensor, Tensor]:
    """Single self-attention head on an (m, d) embedding matrix.

    Returns ``(A @ V, A)`` with ``A = softmax(Q K^T / sqrt(k))``.
    """
    q, k, v = E @ w_query, E @ w_key, E @ w_value
    A = T.softmax(q @ k.T, scale=math.sqrt(w_key.shape[-1]))
    return A @ v, A


class TabTransformer:
    """Column embedding -> N transformer layers -> MLP head producing one logit per row.

    Parameters live in ``self.params`` (an ordered name -> Tensor dict) in
    three groups: ``embed.*`` (column embeddings), ``layers.<i>.*``
    (transformer stack) and ``head.*`` (MLP).  Each group is initialized
    from its own named random stream, so a model with zero layers shares
    its embedding and head initialization with any deeper model of the same
    seed.
    """

    def __init__(self, cardinalities: Sequence[int], n_cont: int, config: ModelConfig | None = None,
                 seed: int = 0):
        self.config = config = config or ModelConfig()
        config.validate()
        self.cardinalities = [int(c) for c in cardinalities]
        if not self.cardinalities:
            raise ConfigError("at least one categorical column is required")
        if any(c < 0 for c in self.cardinalities):
            raise ConfigError("cardinalities must be non-negative")
        self.n_cont = int(n_cont)
        self.seed = int(seed)
        self.m = len(self.cardinalities)
        self.d = config.d
        self.ident_dim = config.identifier_dim()
        self.offsets = np.concatenate([[0], np.cumsum([c + 1 for c in self.cardinalities])[:-1]]).astype(np.int64)
        self.params: dict[str, Tensor] = {}
        self._init_embedding()
        for i in range(config.n_layers):
            self._init_layer(i)
        self._init_head()

    # -- construction -----------------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = T.parameter(value, name=name)

    def _init_embedding(self) -> None:
        rng = stream(self.seed, "embed")
        d, ell = self.d, self.ident_dim
        std = 1.0 / math.sqrt(d)
        rows = int(sum(c + 1 for c in self.cardinalities))
        value_dim = d if self.config.column_embedding == "add" else d - ell
        self._add("embed.table", rng.normal(0.0, std, size=(rows, value_dim)))
        if ell:
            self._add("embed.ident", rng.normal(0.0, std, size=(self.m, ell)))

    def _init_layer(self, i: int) -> None:
        rng = stream(self.seed, "layer", i)
        d = self.d
        p = f"layers.{i}."
        for name in ("wq", "wk", "wv", "wo"):
            self._add(p + name, _uniform(rng, d, (d, d)))
        self._add(p + "bo", _uniform(rng, d, (d,)))
        self._add(p + "w1", _uniform(rng, d, (d, 4 * d)))
        self._add(p + "b1", _uniform(rng, d, (4 * d,)))
        self._add(p + "w2", _uniform(rng, 4 * d, (4 * d, d)))
        self._add(p + "b2", _uniform(rng, 4 * d, (d,)))
        for ln in ("ln1", "ln2"):
            self._add(p + ln + ".g", np.ones(d))
            self._add(p + ln + ".b", np.zeros(d))

    def _init_head(self) -> None:
        self.reset_head(self.seed)

    def reset_head(self, seed: int) -> None:
        rng = stream(seed, "head")
        widths = [self.head_input_width] + [mult * self.head_input_width for mult in self.config.head_hidden] + [1]
        for j in range(len(widths) - 1):
            self._add(f"head.w{j}", _uniform(rng, widths[j], (widths[j], widths[j + 1])))
            self._add(f"head.b{j}", _uniform(rng, widths[j], (widths[j + 1],)))
            if self.config.head_norm == "layernorm" and j < len(widths) - 2:
                self._add(f"head.norm{j}.g", np.ones(widths[j + 1]))
                self._add(f"head.norm{j}.b", np.zeros(widths[j + 1]))

    # -- introspection ----------------------------------------------------

    @property
    def n_layers(self) -> int:
        return self.config.n_layers

    @property
    def head_input_width(self) -> int:
        return self.d * self.m + self.n_cont

    @property
    def dtype(self) -> np.dtype:
        return self.params["embed.table"].dtype

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def group(self, prefix: str) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise ConfigError(f"state dict mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for k, v in state.items():
            p = self.params[k]
            if tuple(v.shape) != p.shape:
                raise ConfigError(f"shape mismatch for {k}: {v.shape} vs {p.shape}")
            p.data[...] = v

    def clone(self) -> "TabTransformer":
        other = TabTransformer.__new__(TabTransformer)
        other.__dict__.update({k: v for k, v in self.__dict__.items() if k != "params"})
        other.params = {k: T.parameter(v.data.copy(), name=k, dtype=v.dtype) for k, v in self.params.items()}
        return other

    # -- embeddings -------------------------------------------------------

    def class_embeddings(self, column: int) -> np.ndarray:
        """All (d_i + 1) mode-specific embeddings of one column, row 0 = missing."""
        start = self.offsets[column]
        rows = self.params["embed.table"].data[start:start + self.cardinalities[column] + 1]
        return self._combine_np(rows, column)

    def _combine_np(self, rows: np.ndarray, column: int) -> np.ndarray:
        mode = self.config.column_embedding
        if mode == "none":
            return rows.copy()
        ident = self.params["embed.ident"].data[column]
        if mode == "add":
            return rows + ident
        return np.concatenate([np.broadcast_to(ident, (rows.shape[0], ident.size)), rows], axis=1)

    def embed_columns(self, x_cat: np.ndarray, impute_mask: np.ndarray | None = None) -> Tensor:
        """Map codes (B, m) to embeddings (B, m, d).

        Cells flagged in ``impute_mask`` get the column's average class
        embedding instead of their own row.
        """
        x_cat = np.asarray(x_cat, dtype=np.int64)
        if x_cat.ndim == 1:
            x_cat = x_cat[None, :]
        if x_cat.shape[1] != self.m:
            raise ValueError(f"expected {self.m} categorical columns, got {x_cat.shape[1]}")
        card = np.asarray(self.cardinalities)
        if np.any(x_cat < 0) or np.any(x_cat > card):
            bad = np.argwhere((x_cat < 0) | (x_cat > card))[0]
            raise IndexError(f"code {x_cat[tuple(bad)]} out of range for column {bad[1]} (max {card[bad[1]]})")
        B = x_cat.shape[0]
        w = T.gather_rows(self.params["embed.table"], x_cat + self.offsets)
        mode = self.config.column_embedding
        if mode == "none":
            E = w
        elif mode == "add":
            E = w + self.params["embed.ident"]
        else:
            ident = T.broadcast_to(self.params["embed.ident"], (B, self.m, self.ident_dim))
            E = T.concat([ident, w], axis=-1)
        if impute_mask is not None and np.any(impute_mask):
            # a column without observed classes keeps its missing row
            avg = np.stack([average_class_embedding(self, i) if self.cardinalities[i] else self.class_embeddings(i)[0]
                            for i in range(self.m)]).astype(E.dtype)
            E = T.where(np.asarray(impute_mask, dtype=bool)[..., None], Tensor(avg, dtype=E.dtype), E)
        return E

    # -- transformer ------------------------------------------------------

    def transformer_layer(self, i: int, E: Tensor, training: bool = False, rng=None) -> Tensor:
        p = f"layers.{i}."
        P = self.params
        B, m, d = E.shape
        H = self.config.n_heads
        k = d // H

        def heads(x: Tensor) -> Tensor:
            return x.reshape(B, m, H, k).transpose(0, 2, 1, 3)

        q = heads(E @ P[p + "wq"])
        kk = heads(E @ P[p + "wk"])
        v = heads(E @ P[p + "wv"])
        A = T.softmax(q @ kk.transpose(0, 1, 3, 2), scale=math.sqrt(k))
        att = (A @ v).transpose(0, 2, 1, 3).reshape(B, m, d)
        att = T.dropout(att @ P[p + "wo"] + P[p + "bo"], self.config.dropout, rng, training)
        h = T.layer_norm(E + att, P[p + "ln1.g"], P[p + "ln1.b"], self.config.ln_eps)
        ff = T.relu(h @ P[p + "w1"] + P[p + "b1"]) @ P[p + "w2"] + P[p + "b2"]
        ff = T.dropout(ff, self.config.dropout, rng, training)
        return T.layer_norm(h + ff, P[p + "ln2.g"], P[p + "ln2.b"], self.config.ln_eps)

    def contextual(self, x_cat, training: bool = False, rng=None, impute_mask=None,
                   upto: int | None = None) -> list[Tensor]:
        """Embeddings after 0, 1, ..., ``upto`` (default N) transformer layers."""
        upto = self.n_layers if upto is None else upto
        outs = [self.embed_columns(x_cat, impute_mask)]
        for i in range(upto):
            outs.append(self.transformer_layer(i, outs[-1], training, rng))
        return outs

    # -- head -------------------------------------------------------------

    def head(self, H: Tensor, x_cont, training: bool = False, rng=None) -> Tensor:
        B = H.shape[0]
        x = H.reshape(B, self.m * self.d)
        if self.n_cont:
            xc = Tensor(np.asarray(x_cont).reshape(B, self.n_cont), dtype=x.dtype)
            x = T.concat([x, xc], axis=1)
        if x.shape[1] != self.head_input_width:
            raise ValueError(f"head input width {x.shape[1]} != {self.head_input_width}")
        act = T.selu if self.config.head_activation == "selu" else T.relu
        n_lin = len(self.config.head_hidden) + 1
        P = self.params
        for j in range(n_lin):
            x = x @ P[f"head.w{j}"] + P[f"head.b{j}"]
            if j < n_lin - 1:
                x = act(x)
                if self.config.head_norm == "layernorm":
                    x = T.layer_norm(x, P[f"head.norm{j}.g"], P[f"head.norm{j}.b"], self.config.ln_eps)
                x = T.dropout(x, self.config.dropout, rng, training)
        return x.reshape(B)

    def forward(self, x_cat, x_cont=None, training: bool = False, rng=None, impute_mask=None) -> Tensor:
        """One logit per row; positive logit favours class 1."""
        x_cat = np.asarray(x_cat)
        if x_cat.ndim == 1:
            x_cat = x_cat[None, :]
        if x_cont is None:
            x_cont = np.zeros((x_cat.shape[0], self.n_cont), dtype=self.dtype)
        H = self.contextual(x_cat, training, rng, impute_mask)[-1]
        return self.head(H, x_cont, training, rng)

    __call__ = forward

    def loss(self, x_cat, x_cont, y, training: bool = False, rng=None) -> Tensor:
        return T.bce_with_logits(self.forward(x_cat, x_cont, training, rng), y)

    def predict_logits(self, x_cat, x_cont, batch_size: int = 1024, impute_mask=None) -> np.ndarray:
        out = []
        with T.no_grad():
            for s in range(0, len(x_cat), batch_size):
                sl = slice(s, s + batch_size)
                mask = None if impute_mask is None else impute_mask[sl]
                out.append(self.forward(x_cat[sl], x_cont[sl], impute_mask=mask).data)
        return np.concatenate(out) if out else np.zeros(0, dtype=self.dtype)


def baseline_mlp(cardinalities: Sequence[int], n_cont: int, config: ModelConfig | None = None,
                 seed: int = 0) -> TabTransformer:
    """The same pipeline with the transformer stack removed."""
    config = dataclasses.replace(config or ModelConfig(), n_layers=0)
    return TabTransformer(cardinalities, n_cont, config, seed)


def baseline_mlp_forward(x_cat, x_cont, model: TabTransformer, training: bool = False, rng=None) -> Tensor:
    if model.n_layers != 0:
        raise ValueError("baseline MLP has no transformer layers")
    return model.forward(x_cat, x_cont, training, rng)


def average_class_embedding(model: TabTransformer, column: int) -> np.ndarray:
    """Mean embedding over the observed classes 1..d_i of one column (missing row excluded)."""
    if not 0 <= column < model.m:
        raise IndexError(f"column {column} out of range")
    if model.cardinalities[column] == 0:
        raise ValueError(f"column {column} has no observed classes")
    return model.class_embeddings(column)[1:].mean(axis=0)


# ---------------------------------------------------------------------------


def one_hot_features(x_cat: np.ndarray, cardinalities: Sequence[int], x_cont: np.ndarray | None = None) -> np.ndarray:
    """One-hot codes (missing included as its own indicator) followed by continuous columns."""
    x_cat = np.asarray(x_cat)
    blocks = [np.eye(c + 1, dtype=np.float64)[x_cat[:, i]] for i, c in enumerate(cardinalities)]
    if x_cont is not None and np.asarray(x_cont).size:
        blocks.append(np.asarray(x_cont, dtype=np.float64))
    return np.concatenate(blocks, axis=1) if blocks else np.zeros((len(x_cat), 0))


class LogisticRegression:
    """L2-regularized logistic regression fit by full-batch first-order descent.

    Features are standardized with training statistics.  Iteration stops
    once the objective changes by less than ``tol`` between steps.
    """

    def __init__(self, l2: float = 1e-4, lr: float = 0.05, tol: float = 1e-7, max_iter: int = 5000):
        self.l2, self.lr, self.tol, self.max_iter = l2, lr, tol, max_iter
        self.n_iter = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LogisticRegression":
        from .optim import AdamW

        X = np.asarray(X, dtype=np.float64)
        self.mu = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd = np.where(sd > 0, sd, 1.0)
        Z = Tensor((X - self.mu) / self.sd, dtype=np.float64)
        w = T.parameter(np.zeros(X.shape[1]), dtype=np.float64)
        b = T.parameter(np.zeros(1), dtype=np.float64)
        opt = AdamW([w, b], lr=self.lr)
        prev = np.inf
        for it in range(self.max_iter):
            with T.Tape() as tape:
                logits = (Z @ w.reshape(-1, 1)).reshape(-1) + b
                loss = T.bce_with_logits(logits, y) + self.l2 * 0.5 * (w * w).sum()
            cur = loss.item()
            if abs(prev - cur) < self.tol:
                break
            prev = cur
            opt.step(tape.gradient(loss, [w, b]))
        self.n_iter = it + 1
        self.w, self.b = w.data.copy(), float(b.data[0])
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return ((np.asarray(X, dtype=np.float64) - self.mu) / self.sd) @ self.w + self.b
