from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from napbench.dataset import (
    assemble_tensors,
    build_dataset,
    build_prefixes,
    compute_time_deltas,
    dump_tensors,
    fit_time_scaler,
    flatten_for_mlp,
    load_tensor_dump,
    plan_folds,
)
from napbench.encode import build_layout, fit_encoders
from napbench.eventlog import AttributeSchema, Event, EventLog, Trace, preprocess
from napbench.synthetic import random_log


def brute_force_prefixes(log):
    """Independent enumerator working from the flat event stream."""
    by_case = {}
    for e in log.events():
        by_case.setdefault(e.case_id, []).append(e.activity)
    out = []
    for case in log.case_ids:
        acts = by_case[case]
        head = []
        for a in acts:
            if head:
                out.append((case, tuple(head), a))
            head.append(a)
    return out


@given(st.integers(0, 2**32 - 1))
def test_prefixes_match_brute_force(seed):
    log = random_log(np.random.default_rng(seed))
    got = [(p.case_id, tuple(e.activity for e in p.events), p.label) for p in build_prefixes(log)]
    assert got == brute_force_prefixes(log)
    assert len(got) == sum(max(len(t) - 1, 0) for t in log)


def test_single_event_trace_yields_nothing():
    t = Trace("x", (Event("A", "x", datetime(2020, 1, 1)),))
    assert build_prefixes(EventLog((t,), AttributeSchema(()))) == []


def test_time_deltas():
    t0 = datetime(2020, 1, 1)
    events = tuple(Event(a, "c", t0 + timedelta(seconds=s)) for a, s in zip("ABC", (0, 30, 90)))
    assert compute_time_deltas(Trace("c", events)).tolist() == [0.0, 30.0, 60.0]


@pytest.fixture(scope="module")
def onehot_set(small_grammar):
    small_grammar = preprocess(small_grammar)
    enc = fit_encoders(small_grammar, "onehot")
    layout = build_layout(small_grammar.schema, "onehot", enc, fit_time_scaler(small_grammar))
    return small_grammar, layout, build_dataset(small_grammar, layout)


def test_tensor_shapes_and_padding(onehot_set):
    log, layout, ds = onehot_set
    n = sum(len(t) - 1 for t in log)
    assert ds.X.shape == (n, log.max_trace_len, layout.width)
    assert ds.Y.shape == (n, len(log.activity_vocabulary()))
    assert np.all(ds.Y.sum(axis=1) == 1)
    m = ds.X.shape[1]
    for i, k in enumerate(ds.lengths):
        assert not ds.X[i, : m - k].any()
        # the activity block of every real step is a one-hot row
        act = ds.X[i, m - k :, layout.activity.start : layout.activity.stop]
        assert np.all(act.sum(axis=1) == 1)
    assert np.all((ds.X >= 0) & (ds.X <= 1))


def test_rows_match_source_events(onehot_set):
    log, layout, ds = onehot_set
    vocab = log.activity_vocabulary()
    traces = {t.case_id: t for t in log}
    m = ds.X.shape[1]
    for i in range(0, len(ds), 7):
        case, k = ds.provenance[i]
        t = traces[case]
        acts = ds.X[i, m - k :, layout.activity.start : layout.activity.stop].argmax(axis=1)
        assert [vocab[a] for a in acts] == list(t.activities[:k])
        assert vocab[ds.labels[i]] == t.activities[k]


def test_explicit_max_len(onehot_set):
    log, layout, _ = onehot_set
    pref = build_prefixes(log)
    ds = assemble_tensors(pref, layout, log.activity_vocabulary())
    assert ds.X.shape[1] == max(len(p) for p in pref) + 1
    with pytest.raises(ValueError):
        assemble_tensors(pref, layout, log.activity_vocabulary(), max_len=2)
    with pytest.raises(KeyError):
        assemble_tensors(pref, layout, ("A",))


def test_dump_round_trip(tmp_path, onehot_set):
    _, _, ds = onehot_set
    dump_tensors(ds, tmp_path / "t.bin")
    X, Y = load_tensor_dump(tmp_path / "t.bin")
    assert np.array_equal(X, ds.X) and np.array_equal(Y, ds.Y)
    assert flatten_for_mlp(ds.X).shape == (len(ds), ds.X.shape[1] * ds.X.shape[2])


def test_select_cases(onehot_set):
    log, _, ds = onehot_set
    keep = log.case_ids[:5]
    sub = ds.select_cases(keep)
    assert set(sub.case_ids) == set(keep)
    assert len(sub) == sum(len(t) - 1 for t in log.traces[:5])


@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 1000))
def test_fold_plan_partitions_cases(n, k, seed):
    cases = [f"c{i}" for i in range(n)]
    if n < k:
        with pytest.raises(ValueError):
            plan_folds(cases, k, seed)
        return
    plan = plan_folds(cases, k, seed)
    folds = [plan.cases(f) for f in range(k)]
    assert sorted(c for f in folds for c in f) == sorted(cases)
    sizes = plan.sizes()
    assert max(sizes) - min(sizes) <= 1 and min(sizes) >= 1
    assert plan.assignment == plan_folds(cases, k, seed).assignment
