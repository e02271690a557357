import math
import random

import numpy as np
import pytest

from dialnoise.injector import (
    EmbeddingTable,
    InjectionError,
    build_transition_matrix,
    load_embeddings,
)


def _table(**vectors):
    return EmbeddingTable({k: np.asarray(v, dtype=np.float32) for k, v in vectors.items()})


def test_two_labels_forced_swap():
    table = _table(a=[1.0, 0.0], b=[-1.0, 0.5])
    matrix = build_transition_matrix(["a", "b"], table)
    assert np.allclose(matrix.rows, [[0.0, 1.0], [1.0, 0.0]])


def test_three_vector_case_matches_brute_force_cosines():
    table = _table(a=[1.0, 0.0], b=[0.9, 0.1], c=[0.0, 1.0])
    matrix = build_transition_matrix(["a", "b", "c"], table)

    def cos(u, v):
        du = math.sqrt(sum(x * x for x in u))
        dv = math.sqrt(sum(x * x for x in v))
        return sum(x * y for x, y in zip(u, v)) / (du * dv)

    vecs = {"a": [1.0, 0.0], "b": [0.9, 0.1], "c": [0.0, 1.0]}
    eps = 1e-6
    for i, vi in enumerate("abc"):
        weights = []
        for j, vj in enumerate("abc"):
            if i == j:
                weights.append(0.0)
            else:
                weights.append(max(cos(vecs[vi], vecs[vj]), 0.0) + eps)
        total = sum(weights)
        expected = [w / total for w in weights]
        assert np.allclose(matrix.rows[i], expected, atol=1e-6)

    row_a = matrix.rows[0]
    assert row_a[1] > row_a[2]  # a is confused with its near neighbor first
    assert np.allclose(matrix.rows.sum(axis=1), 1.0)


def test_emotion_style_confusion_ordering():
    # anger sits near frustration and far from joy in this hand-made space
    table = _table(anger=[1.0, 0.0, 0.1], frustration=[0.9, 0.1, 0.1],
                   joy=[-0.8, 0.6, 0.0])
    matrix = build_transition_matrix(["anger", "frustration", "joy"], table)
    row = matrix.row_for("anger")
    p_frustration = row[matrix.labels.index("frustration")]
    p_joy = row[matrix.labels.index("joy")]
    assert p_frustration > p_joy


def test_multiword_labels_use_token_mean():
    table = _table(book=[1.0, 0.0], flight=[0.0, 1.0], cancel=[-1.0, 0.0])
    matrix = build_transition_matrix(["book flight", "cancel flight", "book"], table)
    assert matrix.rows.shape == (3, 3)
    expected = np.asarray([0.5, 0.5])
    got = table.embed_label("book flight")
    assert np.allclose(got, expected)


def test_label_without_vocabulary_errors():
    table = _table(alpha=[1.0, 0.0])
    with pytest.raises(InjectionError, match="no in-vocabulary token"):
        build_transition_matrix(["alpha", "zzz"], table)


def test_single_label_errors():
    table = _table(a=[1.0])
    with pytest.raises(InjectionError, match="at least 2"):
        build_transition_matrix(["a", "a"], table)


def test_nan_vector_rejected():
    with pytest.raises(InjectionError, match="NaN"):
        _table(a=[float("nan"), 1.0])


def test_dimension_mismatch_rejected():
    with pytest.raises(InjectionError, match="dimension"):
        _table(a=[1.0, 0.0], b=[1.0, 0.0, 0.0])


def test_random_tables_rows_stochastic_zero_diagonal():
    rng = random.Random(99)
    for trial in range(1000):
        n = rng.randrange(2, 7)
        dim = rng.randrange(2, 5)
        np_rng = np.random.default_rng(trial)
        table = EmbeddingTable({f"w{i}": np_rng.normal(size=dim).astype(np.float32)
                                for i in range(n)})
        matrix = build_transition_matrix([f"w{i}" for i in range(n)], table)
        assert np.abs(matrix.rows.sum(axis=1) - 1.0).max() <= 1e-9
        assert np.all(np.diag(matrix.rows) == 0.0)
        assert np.all(matrix.rows >= 0.0)


def test_determinism():
    table = _table(a=[0.3, 0.7], b=[0.5, 0.5], c=[0.9, 0.1])
    m1 = build_transition_matrix(["a", "b", "c"], table)
    m2 = build_transition_matrix(["a", "b", "c"], table)
    assert np.array_equal(m1.rows, m2.rows)


def test_load_embeddings_glove_style(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("anger 1.0 0.0\nfrustration 0.9 0.1\njoy -0.8 0.6\n", encoding="utf-8")
    table = load_embeddings(path)
    assert set(table.vectors) == {"anger", "frustration", "joy"}


def test_load_embeddings_bad_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("loner\n", encoding="utf-8")
    with pytest.raises(InjectionError, match="expected"):
        load_embeddings(path)
