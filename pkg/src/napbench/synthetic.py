"""Synthetic context-enriched logs for tests and demos.

The grammar log follows ``A B C (B C)^r D`` with ``r`` uniform in 0..3.
Every event carries a categorical ``loops`` attribute naming ``r``, so the
next activity is a deterministic function of the prefix and its context;
without it the B-versus-D decision after each C is a coin flip. ``agent``
(categorical) and ``cost`` (numerical) are noise, and ``cost`` is missing
on roughly 5% of events so imputation has work to do.
"""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .eventlog import AttributeInfo, AttributeSchema, EventLog, Event, Trace, infer_schema

_START = datetime(2020, 1, 1, 8, 0, 0)


def grammar_trace_activities(repeats: int) -> list[str]:
    return ["A", "B", "C"] + ["B", "C"] * repeats + ["D"]


def grammar_log(n_traces: int = 500, seed: int = 0, max_repeats: int = 3) -> EventLog:
    rng = np.random.default_rng(seed)
    agents = ("ann", "bob", "cyd")
    traces = []
    for i in range(n_traces):
        r = int(rng.integers(0, max_repeats + 1))
        case = f"case{i:05d}"
        ts = _START + timedelta(minutes=int(rng.integers(0, 60 * 24 * 365)))
        events = []
        for act in grammar_trace_activities(r):
            cost = None if rng.random() < 0.05 else str(round(float(rng.uniform(10, 500)), 2))
            ctx = {"loops": f"r{r}", "agent": agents[int(rng.integers(len(agents)))], "cost": cost}
            events.append(Event(act, case, ts, ctx))
            ts = ts + timedelta(seconds=int(rng.integers(30, 3600)))
        traces.append(Trace(case, tuple(events)))
    schema = AttributeSchema(
        tuple(AttributeInfo(n, "categorical", 0, 0) for n in ("loops", "agent", "cost")),
        "case_id",
        "activity",
        "timestamp",
    )
    log = EventLog(tuple(traces), schema)
    return EventLog(log.traces, infer_schema(log))


def random_log(rng: np.random.Generator, max_traces: int = 50, max_len: int = 8, n_activities: int = 5) -> EventLog:
    """Small unstructured log: random activities, no context attributes."""
    acts = [chr(ord("A") + i) for i in range(n_activities)]
    traces = []
    for i in range(int(rng.integers(1, max_traces + 1))):
        n = int(rng.integers(1, max_len + 1))
        ts = _START
        events = []
        for _ in range(n):
            events.append(Event(acts[int(rng.integers(n_activities))], f"c{i}", ts, {}))
            ts += timedelta(seconds=int(rng.integers(0, 100)))
        traces.append(Trace(f"c{i}", tuple(events)))
    return EventLog(tuple(traces), AttributeSchema(()))
