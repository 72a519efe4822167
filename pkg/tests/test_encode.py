import hashlib
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from napbench.encode import (
    TIME_DELTA,
    TECHNIQUES,
    NumericScaler,
    binary_width,
    build_layout,
    fit_binary,
    fit_encoders,
    fit_hash,
    fit_onehot,
    fit_ordinal,
    fit_scaler,
    load_encoders,
    md5_bucket,
    save_encoders,
    train_word2vec,
)

COOCCURRENCE = [["P", "X", "Q"], ["P", "Y", "Q"]] * 500 + [["R", "Z", "S"]]

vocabularies = st.lists(st.text(min_size=1, max_size=6), min_size=1, max_size=40, unique=True)


def md5_reference(s, dims=10):
    return int(hashlib.md5(s.encode("utf-8")).hexdigest(), 16) % dims


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@pytest.mark.parametrize(
    "k,expected", [(1, 1), (2, 2), (3, 2), (4, 3), (7, 3), (8, 4), (14, 4), (15, 4), (16, 5), (255, 8), (256, 9)]
)
def test_binary_width(k, expected):
    assert binary_width(k) == expected == math.ceil(math.log2(k + 1))


def test_ordinal_and_binary_tables():
    o = fit_ordinal(["b", "a", "b", None, "c"])
    assert o.vocabulary == ("b", "a", "c")
    assert [o.apply(v)[0] for v in ("b", "a", "c", "zz", None)] == [1, 2, 3, 0, 0]
    b = fit_binary(["a", "b", "c"])
    assert b.width == 2
    assert [b.apply(v).tolist() for v in ("a", "b", "c", "?")] == [[0, 1], [1, 0], [1, 1], [0, 0]]


def test_onehot_unknown_is_zero():
    e = fit_onehot(["x", "y"])
    assert e.apply("x").tolist() == [1, 0]
    assert e.apply("q").tolist() == [0, 0]


def test_hash_matches_reference():
    samples = [f"value-{i}" for i in range(15)] + ["", "Ä", "Assign seriousness", "Closed", "123"]
    enc = fit_hash()
    for s in samples:
        expected = np.zeros(10)
        expected[md5_reference(s)] = 1
        assert md5_bucket(s, 10) == md5_reference(s)
        assert np.array_equal(enc.apply(s), expected)
    assert enc.apply(None).sum() == 0


@given(vocabularies)
def test_encoder_widths_and_injectivity(vocab):
    k = len(vocab)
    o, b, oh, h = fit_ordinal(vocab), fit_binary(vocab), fit_onehot(vocab), fit_hash(vocab)
    assert (o.width, b.width, oh.width, h.width) == (1, math.ceil(math.log2(k + 1)), k, 10)
    for enc in (o, b):
        rows = {tuple(enc.apply(v)) for v in vocab}
        assert len(rows) == k
        assert tuple(enc.apply("\x00unseen")) not in rows
    m = np.array([oh.apply(v) for v in vocab])
    assert np.array_equal(m, np.eye(k))
    for v in vocab:
        assert h.apply(v).sum() == 1 and np.array_equal(h.apply(v), fit_hash().apply(v))


def test_word2vec_width_and_determinism():
    a = train_word2vec(COOCCURRENCE, seed=5)
    b = train_word2vec(COOCCURRENCE, seed=5)
    c = train_word2vec(COOCCURRENCE, seed=6)
    assert a.width == 32
    assert np.array_equal(a.table, b.table)
    assert not np.array_equal(a.table, c.table)
    assert a.apply("unseen").sum() == 0


@pytest.mark.parametrize("seed", range(3))
def test_word2vec_shared_context_is_closer(seed):
    enc = train_word2vec(COOCCURRENCE, seed=seed)
    x, y, z = enc.apply("X"), enc.apply("Y"), enc.apply("Z")
    assert cosine(x, y) > cosine(x, z)


def test_word2vec_rejects_bad_input():
    with pytest.raises(ValueError):
        train_word2vec([[None], []])
    with pytest.raises(ValueError):
        train_word2vec([["a"]], epochs=0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.floats(-2e6, 2e6))
def test_scaler_range(values, probe):
    s = fit_scaler(values)
    for v in values:
        assert 0.0 <= s.transform(v) <= 1.0
    assert 0.0 <= s.transform(probe) <= 1.0
    if s.max > s.min:
        assert s.transform(s.min) == 0.0 and s.transform(s.max) == 1.0


def test_scaler_constant_and_empty():
    assert NumericScaler("x", 3.0, 3.0).transform(100) == 0.0
    assert NumericScaler("x", 0.0, 5.0).transform(None) == 0.0
    with pytest.raises(ValueError):
        fit_scaler([None])


@pytest.mark.parametrize("technique", TECHNIQUES)
def test_layout_order_and_persistence(tmp_path, small_grammar, technique):
    enc = fit_encoders(small_grammar, technique, seed=1)
    layout = build_layout(small_grammar.schema, technique, enc)
    names = [b.name for b in layout.blocks]
    assert names == ["activity", TIME_DELTA, "loops", "agent", "cost"]
    assert [b.role for b in layout.blocks] == ["activity", "time", "context", "context", "context"]
    starts = [b.start for b in layout.blocks]
    assert starts[0] == 0 and all(b.stop == n.start for b, n in zip(layout.blocks, layout.blocks[1:]))
    expected_act = {"ordinal": 1, "binary": 3, "onehot": 4, "hash": 10, "word2vec": 32}[technique]
    assert layout.activity.stop - layout.activity.start == expected_act
    assert isinstance(enc["cost"], NumericScaler)

    path = tmp_path / "enc.json"
    save_encoders(enc, path)
    back = load_encoders(path)
    assert back.keys() == enc.keys()
    for name in enc:
        for v in ("A", "B", "r1", "bob", 42.0, "missing-value"):
            if isinstance(enc[name], NumericScaler) and isinstance(v, str):
                continue
            if not isinstance(enc[name], NumericScaler) and not isinstance(v, str):
                continue
            assert np.array_equal(enc[name].apply(v), back[name].apply(v))


def test_layout_rejects_missing_encoder(small_grammar):
    enc = fit_encoders(small_grammar, "onehot")
    del enc["agent"]
    with pytest.raises(KeyError):
        build_layout(small_grammar.schema, "onehot", enc)
    with pytest.raises(ValueError):
        build_layout(small_grammar.schema, "bogus", fit_encoders(small_grammar, "onehot"))
