import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from tabtransformer.data import split
from tabtransformer.experiments import _rows_for_train_size, prepare_table
from tabtransformer.synthetic import cluster_table, latent_table, xor_table


def codes(table, j):
    return np.array([r[j] for r in table.rows])


def test_xor_label_is_parity_of_first_two_columns():
    t = xor_table(n=500, seed=3)
    a = np.array([int(v[1:]) for v in codes(t, 0)])
    b = np.array([int(v[1:]) for v in codes(t, 1)])
    assert np.array_equal((a % 2) ^ (b % 2), codes(t, -1).astype(int))
    assert len(t.header) == 8


def test_cluster_table_halves_separate_the_label():
    t = cluster_table(n=4000, n_columns=3, n_classes=8, fidelity=1.0, label_noise=0.0, seed=1)
    y = codes(t, -1).astype(int)
    for j in range(3):
        c = codes(t, j)
        pos, neg = set(c[y == 1]), set(c[y == 0])
        assert not pos & neg and len(pos) == len(neg) == 4


def test_cluster_table_noise_rates():
    t = cluster_table(n=20_000, n_columns=2, n_classes=10, fidelity=0.6, label_noise=0.1, seed=2)
    y = codes(t, -1).astype(int)
    clean = cluster_table(n=20_000, n_columns=2, n_classes=10, fidelity=1.0, label_noise=0.0, seed=2)
    # same stream draws the cluster first, so flipped labels show up against the clean copy
    assert abs(np.mean(y != codes(clean, -1).astype(int)) - 0.1) < 0.01
    c = codes(t, 0)
    inside = set(codes(clean, 0)[codes(clean, -1) == "1"])
    # a cell leaves its half only through a uniform draw landing in the other half: (1 - fid) / 2
    u = codes(clean, -1) == "1"
    outside = np.mean([v not in inside for v in c[u]])
    assert abs(outside - 0.4 / 2) < 0.02


def test_generators_are_seeded():
    for gen in (xor_table, latent_table, cluster_table):
        assert gen(n=50, seed=4).rows == gen(n=50, seed=4).rows
        assert gen(n=50, seed=4).rows != gen(n=50, seed=5).rows


@settings(max_examples=40, deadline=None)
@given(st.integers(14, 20_000))
def test_rows_for_train_size(n_train):
    n = _rows_for_train_size(n_train)
    assert len(split(n, 0).train) == n_train
    assert all(len(split(k, 0).train) != n_train for k in range(max(20, n - 10), n))


def test_prepare_table_partitions():
    data = prepare_table(xor_table(n=200, seed=0), 0)
    assert (len(data.train), len(data.val), len(data.test)) == (130, 30, 40)
    assert data.cardinalities[:2] == [4, 4] and data.n_cont == 0
