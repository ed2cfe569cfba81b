"""Synthetic tables used by the scaled experiments and tests.

The generators return a :class:`RawTable` of string cells so they go
through the same schema fitting and encoding as a real CSV.
"""

from __future__ import annotations

import numpy as np

from .data import RawTable
from .rng import stream


def xor_table(n: int = 4000, n_noise: int = 5, n_classes: int = 4, seed: int = 0) -> RawTable:
    """Label = parity(a) XOR parity(b) for two categorical columns a, b, plus independent noise columns.

    Every column's marginal carries no information about the label, so any
    model additive in the columns sits at chance.
    """
    rng = stream(seed, "xor-table")
    a = rng.integers(0, n_classes, size=n)
    b = rng.integers(0, n_classes, size=n)
    y = (a % 2) ^ (b % 2)
    cols = [a, b] + [rng.integers(0, int(rng.integers(2, 9)), size=n) for _ in range(n_noise)]
    header = ["a", "b"] + [f"noise{j}" for j in range(n_noise)] + ["y"]
    rows = [[f"v{c[i]}" for c in cols] + [str(int(y[i]))] for i in range(n)]
    return RawTable(header, rows)


def latent_table(n: int = 5000, n_columns: int = 8, n_latent: int = 6, n_classes: int = 6, fidelity: float = 0.7,
                 label_noise: float = 0.05, n_cont: int = 0, seed: int = 0) -> RawTable:
    """Columns are noisy views of one hidden category; the label is a function of that category.

    Each column copies a column-specific relabelling of the hidden value with
    probability ``fidelity`` and is uniform otherwise, so the columns are
    strongly correlated with each other and individually weak predictors.
    The label is 1 for half of the hidden categories, flipped with
    probability ``label_noise``.  Optional continuous columns are pure noise.
    """
    rng = stream(seed, "latent-table")
    z = rng.integers(0, n_latent, size=n)
    positive = rng.permutation(n_latent)[: n_latent // 2]
    y = np.isin(z, positive).astype(int)
    flip = rng.random(n) < label_noise
    y = np.where(flip, 1 - y, y)
    cols = []
    for _ in range(n_columns):
        mapping = rng.integers(0, n_classes, size=n_latent)
        keep = rng.random(n) < fidelity
        cols.append(np.where(keep, mapping[z], rng.integers(0, n_classes, size=n)))
    conts = [rng.standard_normal(n) for _ in range(n_cont)]
    header = [f"c{j}" for j in range(n_columns)] + [f"x{j}" for j in range(n_cont)] + ["y"]
    rows = [[f"k{c[i]}" for c in cols] + [repr(float(x[i])) for x in conts] + [str(int(y[i]))] for i in range(n)]
    return RawTable(header, rows)


def cluster_table(n: int = 8000, n_columns: int = 8, n_classes: int = 64, fidelity: float = 0.9,
                  label_noise: float = 0.05, seed: int = 0) -> RawTable:
    """A binary hidden cluster splits every column's classes into two halves.

    Each cell is a uniform draw from its row's half (under a column-specific
    relabelling) with probability ``fidelity`` and uniform over all classes
    otherwise.  The label is the cluster, flipped with probability
    ``label_noise``.  With many classes a few labeled rows cover only part of
    each vocabulary, while unlabeled rows reveal which classes co-occur.
    """
    rng = stream(seed, "cluster-table")
    u = rng.integers(0, 2, size=n)
    y = np.where(rng.random(n) < label_noise, 1 - u, u)
    half = n_classes // 2
    cols = []
    for _ in range(n_columns):
        relabel = rng.permutation(n_classes)
        inside = relabel[u * half + rng.integers(0, half, size=n)]
        keep = rng.random(n) < fidelity
        cols.append(np.where(keep, inside, rng.integers(0, n_classes, size=n)))
    header = [f"c{j}" for j in range(n_columns)] + ["y"]
    rows = [[f"k{c[i]}" for c in cols] + [str(int(y[i]))] for i in range(n)]
    return RawTable(header, rows)
