"""CSV ingestion, schema fitting, encoding and the train/val/test split protocol."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .rng import stream

SCHEMA_FORMAT_VERSION = 1
RESCALINGS = ("zscore", "quantile", "log", "none")
MAX_QUANTILE_KNOTS = 1001


@dataclass
class RawTable:
    header: list[str]
    rows: list[list[str]]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        try:
            j = self.header.index(name)
        except ValueError:
            raise DataError(f"column {name!r} not in table") from None
        return [r[j] for r in self.rows]

    def write_csv(self, path, delimiter: str = ",") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(self.header)
            w.writerows(self.rows)


def load_csv(path, has_header: bool = True, delimiter: str = ",") -> RawTable:
    """Read a CSV file into string cells; an empty cell means missing.

    Cells are whitespace-stripped.  Raises :class:`DataError` naming the
    offending line when a row has a different field count than the first.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows: list[list[str]] = []
        width = None
        header = None
        for rec in reader:
            if not rec:
                continue
            cells = [c.strip() for c in rec]
            if width is None:
                width = len(cells)
                if has_header:
                    header = cells
                    continue
            elif len(cells) != width:
                raise DataError(f"{path}: line {reader.line_num}: expected {width} fields, got {len(cells)}")
            rows.append(cells)
    if width is None:
        raise DataError(f"{path}: empty file")
    if header is None:
        header = [f"col{j}" for j in range(width)]
    return RawTable(header=header, rows=rows)


# ---------------------------------------------------------------------------
# schema


@dataclass
class CategoricalColumn:
    name: str
    classes: list[str]
    kind: str = field(default="categorical", init=False)

    @property
    def cardinality(self) -> int:
        return len(self.classes)

    def code_of(self, value: str) -> int:
        return self._index().get(value, 0)

    def _index(self) -> dict[str, int]:
        idx = getattr(self, "_idx", None)
        if idx is None:
            idx = {c: i + 1 for i, c in enumerate(self.classes)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "classes": list(self.classes)}


@dataclass
class ContinuousColumn:
    name: str
    rescaling: str
    stats: dict
    kind: str = field(default="continuous", init=False)

    def rescale(self, values: np.ndarray) -> np.ndarray:
        s = self.stats
        v = np.asarray(values, dtype=np.float64)
        if self.rescaling == "zscore":
            return (v - s["mean"]) / s["std"]
        if self.rescaling == "quantile":
            return np.interp(v, s["knots"], s["cdf"])
        if self.rescaling == "log":
            return np.log1p(np.maximum(v - s["min"], 0.0))
        return v

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "rescaling": self.rescaling, "stats": self.stats}


@dataclass
class Schema:
    columns: list
    target: str
    positive_label: str
    negative_label: str

    @property
    def categorical(self) -> list[CategoricalColumn]:
        return [c for c in self.columns if c.kind == "categorical"]

    @property
    def continuous(self) -> list[ContinuousColumn]:
        return [c for c in self.columns if c.kind == "continuous"]

    @property
    def cardinalities(self) -> list[int]:
        return [c.cardinality for c in self.categorical]

    def to_dict(self) -> dict:
        return {
            "format_version": SCHEMA_FORMAT_VERSION,
            "target": self.target,
            "positive_label": self.positive_label,
            "negative_label": self.negative_label,
            "columns": [c.to_dict() for c in self.columns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        if d.get("format_version") != SCHEMA_FORMAT_VERSION:
            raise SchemaError(f"unsupported schema format_version {d.get('format_version')!r}")
        cols = []
        for c in d["columns"]:
            if c["kind"] == "categorical":
                cols.append(CategoricalColumn(c["name"], list(c["classes"])))
            elif c["kind"] == "continuous":
                cols.append(ContinuousColumn(c["name"], c["rescaling"], dict(c["stats"])))
            else:
                raise SchemaError(f"unknown column kind {c['kind']!r}")
        return cls(cols, d["target"], d["positive_label"], d["negative_label"])

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_float(s: str) -> float | None:
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _fit_continuous(name: str, values: np.ndarray, rescaling: str) -> ContinuousColumn:
    if rescaling not in RESCALINGS:
        raise ConfigError(f"unknown rescaling {rescaling!r}")
    stats: dict = {"fill": float(values.mean())}
    if rescaling == "zscore":
        std = float(values.std())
        stats.update(mean=float(values.mean()), std=std if std > 0 else 1.0)
    elif rescaling == "quantile":
        uniq, counts = np.unique(values, return_counts=True)
        below = np.concatenate([[0], np.cumsum(counts)[:-1]])
        cdf = (below + 0.5 * counts) / values.size
        if uniq.size > MAX_QUANTILE_KNOTS:
            keep = np.unique(np.linspace(0, uniq.size - 1, MAX_QUANTILE_KNOTS).round().astype(int))
            uniq, cdf = uniq[keep], cdf[keep]
        stats.update(knots=uniq.tolist(), cdf=cdf.tolist())
    elif rescaling == "log":
        stats.update(min=float(values.min()))
    return ContinuousColumn(name, rescaling, stats)


def fit_schema(table: RawTable, training_rows: Sequence[int], target: str, overrides: dict | None = None,
               categorical_threshold: int = 10, rescaling: str = "zscore",
               positive_label: str | None = None) -> Schema:
    """Infer column kinds and fit vocabularies and rescaling statistics on training rows only.

    A column is categorical when any non-missing training value fails to parse
    as a finite number, or when it has at most ``categorical_threshold``
    distinct numeric values.  ``overrides`` maps a column name to
    ``"categorical"``, ``"continuous"``, ``"drop"`` or a dict with ``kind``
    and/or ``rescaling``.  Vocabularies keep first-occurrence order.
    """
    overrides = overrides or {}
    if target not in table.header:
        raise SchemaError(f"target column {target!r} not found")
    rows = [table.rows[i] for i in training_rows]
    if not rows:
        raise SchemaError("no training rows")
    tj = table.header.index(target)
    labels = [r[tj] for r in rows]
    if any(v == "" for v in labels):
        raise SchemaError("target has missing values in training rows")
    distinct = sorted(set(labels))
    if len(distinct) != 2:
        raise SchemaError(f"target must be binary on training rows, found {len(distinct)} classes")
    if positive_label is None:
        positive_label = distinct[1]
    if positive_label not in distinct:
        raise SchemaError(f"positive label {positive_label!r} not among target values {distinct}")
    negative_label = distinct[0] if distinct[1] == positive_label else distinct[1]

    columns = []
    for j, name in enumerate(table.header):
        if j == tj:
            continue
        ov = overrides.get(name, {})
        if isinstance(ov, str):
            ov = {"kind": ov}
        kind = ov.get("kind")
        if kind == "drop":
            continue
        cells = [r[j] for r in rows]
        present = [c for c in cells if c != ""]
        nums = [_as_float(c) for c in present]
        numeric = bool(present) and all(v is not None for v in nums)
        if kind is None:
            kind = "continuous" if numeric and len(set(nums)) > categorical_threshold else "categorical"
        if kind == "categorical":
            vocab = list(dict.fromkeys(present))
            columns.append(CategoricalColumn(name, vocab))
        elif kind == "continuous":
            if not numeric:
                raise SchemaError(f"column {name!r} forced continuous but has non-numeric values")
            columns.append(_fit_continuous(name, np.asarray(nums, dtype=np.float64), ov.get("rescaling", rescaling)))
        else:
            raise ConfigError(f"unknown column kind override {kind!r} for {name!r}")
    for name in overrides:
        if name not in table.header:
            raise ConfigError(f"override for unknown column {name!r}")
    return Schema(columns, target, positive_label, negative_label)


# ---------------------------------------------------------------------------
# encoded data


@dataclass
class EncodedDataset:
    x_cat: np.ndarray  # (n, m) int64, 0 = missing/unseen
    x_cont: np.ndarray  # (n, c) float32
    y: np.ndarray  # (n,) int64 in {0, 1}

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def n(self) -> int:
        return len(self)

    def subset(self, rows) -> "EncodedDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return EncodedDataset(self.x_cat[rows], self.x_cont[rows], self.y[rows])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, x_cat=self.x_cat, x_cont=self.x_cont, y=self.y)

    @classmethod
    def load(cls, path) -> "EncodedDataset":
        with np.load(path) as z:
            return cls(z["x_cat"], z["x_cont"], z["y"])


def encode(table: RawTable, schema: Schema) -> EncodedDataset:
    """Map a raw table through a fitted schema.

    Missing and unseen categorical values become code 0; missing continuous
    values take the training mean before rescaling.
    """
    n = len(table)
    cats, conts = [], []
    for col in schema.columns:
        cells = table.column(col.name)
        if col.kind == "categorical":
            index = col._index()
            cats.append(np.fromiter((index.get(c, 0) for c in cells), dtype=np.int64, count=n))
        else:
            fill = col.stats["fill"]
            raw = np.empty(n, dtype=np.float64)
            for i, c in enumerate(cells):
                v = _as_float(c) if c != "" else None
                raw[i] = fill if v is None else v
            conts.append(col.rescale(raw))
    tcells = table.column(schema.target)
    y = np.empty(n, dtype=np.int64)
    for i, v in enumerate(tcells):
        if v == schema.positive_label:
            y[i] = 1
        elif v == schema.negative_label:
            y[i] = 0
        else:
            raise DataError(f"row {i}: target value {v!r} is neither {schema.positive_label!r} nor {schema.negative_label!r}")
    x_cat = np.stack(cats, axis=1) if cats else np.zeros((n, 0), dtype=np.int64)
    x_cont = np.stack(conts, axis=1).astype(np.float32) if conts else np.zeros((n, 0), dtype=np.float32)
    return EncodedDataset(x_cat, x_cont, y)


def decode_codes(codes: np.ndarray, schema: Schema) -> list[list[str | None]]:
    """Inverse of the categorical encoding; code 0 decodes to ``None``."""
    out = []
    for row in np.asarray(codes):
        out.append([col.classes[c - 1] if c > 0 else None for col, c in zip(schema.categorical, row)])
    return out


# ---------------------------------------------------------------------------
# splits

VAL_FRACTION = 0.15
TEST_FRACTION = 0.20


@dataclass
class SplitAssignment:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    p: int | None = None

    @property
    def labeled(self) -> np.ndarray:
        return self.train if self.p is None else self.train[: self.p]

    @property
    def unlabeled(self) -> np.ndarray:
        return self.train[:0] if self.p is None else self.train[self.p:]

    def save(self, path) -> None:
        """CSV of ``index,partition``; train rows keep their shuffled order."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "partition"])
            for name in ("train", "val", "test"):
                for i in getattr(self, name):
                    w.writerow([int(i), name])

    @classmethod
    def load(cls, path, p: int | None = None) -> "SplitAssignment":
        parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                parts[rec["partition"]].append(int(rec["index"]))
        arr = {k: np.asarray(v, dtype=np.int64) for k, v in parts.items()}
        out = cls(arr["train"], arr["val"], arr["test"])
        if p is not None:
            out = semisup_assign(out, p)
        return out


def _stratified_counts(labels: np.ndarray, total: int, classes) -> dict:
    # largest-remainder apportionment of `total` across classes
    n = labels.size
    exact = {c: total * np.sum(labels == c) / n for c in classes}
    counts = {c: int(math.floor(v)) for c, v in exact.items()}
    short = total - sum(counts.values())
    for c in sorted(classes, key=lambda c: -(exact[c] - counts[c]))[:short]:
        counts[c] += 1
    return counts


def split(n_rows: int, seed: int, labels: np.ndarray | None = None, stratify: bool = False) -> SplitAssignment:
    """Seeded 65/15/20 partition: floor(.15n) validation, floor(.20n) test, remainder train."""
    if n_rows < 20:
        raise DataError(f"need at least 20 rows to split, got {n_rows}")
    n_val = int(math.floor(VAL_FRACTION * n_rows))
    n_test = int(math.floor(TEST_FRACTION * n_rows))
    rng = stream(seed, "split")
    perm = rng.permutation(n_rows)
    if not stratify:
        return SplitAssignment(perm[n_val + n_test:], perm[:n_val], perm[n_val:n_val + n_test])
    if labels is None:
        raise ConfigError("stratified split needs labels")
    labels = np.asarray(labels)[perm]
    classes = sorted(set(labels.tolist()))
    vc = _stratified_counts(labels, n_val, classes)
    tc = _stratified_counts(labels, n_test, classes)
    val, test, train = [], [], []
    for c in classes:
        idx = perm[labels == c]
        val.append(idx[: vc[c]])
        test.append(idx[vc[c]: vc[c] + tc[c]])
        train.append(idx[vc[c] + tc[c]:])
    return SplitAssignment(*(rng.permutation(np.concatenate(x)) for x in (train, val, test)))


def semisup_split(assignment: SplitAssignment, p: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``p`` training rows are labeled; the rest are unlabeled."""
    if not 1 <= p <= len(assignment.train):
        raise ConfigError(f"labeled size p={p} outside [1, {len(assignment.train)}]")
    return assignment.train[:p], assignment.train[p:]


def semisup_assign(assignment: SplitAssignment, p: int) -> SplitAssignment:
    semisup_split(assignment, p)
    return SplitAssignment(assignment.train, assignment.val, assignment.test, p)
