"""Prefix/label generation, padded tensor assembly and instance-based fold plans."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encode import TIME_DELTA, FeatureLayout, NumericScaler, fit_scaler
from .eventlog import Event, EventLog, Trace


@dataclass(frozen=True)
class Prefix:
    case_id: str
    events: tuple[Event, ...]
    label: str

    def __len__(self) -> int:
        return len(self.events)


def build_prefixes(log: EventLog) -> list[Prefix]:
    """All proper prefixes hd^k, 1 <= k < n, each labelled with activity k+1."""
    out = []
    for t in log.traces:
        for k in range(1, len(t)):
            out.append(Prefix(t.case_id, t.events[:k], t.events[k].activity))
    return out


def raw_time_deltas(events: Sequence[Event]) -> list[float]:
    """Seconds since the previous event; 0 for the first."""
    out = [0.0]
    for prev, cur in zip(events, events[1:]):
        out.append((cur.timestamp - prev.timestamp).total_seconds())
    return out[: len(events)]


def compute_time_deltas(trace: Trace | Sequence[Event], scaler: NumericScaler | None = None) -> np.ndarray:
    events = trace.events if isinstance(trace, Trace) else trace
    raw = raw_time_deltas(events)
    if scaler is None:
        return np.asarray(raw)
    return np.array([scaler.transform(d) for d in raw])


def fit_time_scaler(log: EventLog) -> NumericScaler:
    return fit_scaler([d for t in log.traces for d in raw_time_deltas(t.events)], TIME_DELTA)


@dataclass(frozen=True, eq=False)
class PrefixDataset:
    X: np.ndarray  # N x M x U
    Y: np.ndarray  # N x V
    lengths: np.ndarray
    case_ids: tuple[str, ...]
    classes: tuple[str, ...]

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def provenance(self) -> list[tuple[str, int]]:
        return list(zip(self.case_ids, self.lengths.tolist()))

    @property
    def labels(self) -> np.ndarray:
        return self.Y.argmax(axis=1)

    def take(self, idx: np.ndarray) -> "PrefixDataset":
        idx = np.asarray(idx, dtype=int)
        return PrefixDataset(
            self.X[idx], self.Y[idx], self.lengths[idx], tuple(self.case_ids[i] for i in idx), self.classes
        )

    def select_cases(self, cases) -> "PrefixDataset":
        keep = set(cases)
        return self.take(np.array([i for i, c in enumerate(self.case_ids) if c in keep], dtype=int))


def encode_event(event: Event, delta: float, layout: FeatureLayout) -> np.ndarray:
    row = np.empty(layout.width)
    act = layout.activity
    row[act.start : act.stop] = act.transformer.apply(event.activity)
    tb = layout.time
    row[tb.start] = tb.transformer.transform(delta)
    for b in layout.context:
        row[b.start : b.stop] = b.transformer.apply(event.context.get(b.name))
    return row


def assemble_tensors(
    prefixes: Sequence[Prefix],
    layout: FeatureLayout,
    classes: Sequence[str],
    max_len: int | None = None,
) -> PrefixDataset:
    """Pre-padded tensor: prefix i fills the last ``lengths[i]`` of ``max_len`` steps.

    ``max_len`` defaults to the longest prefix plus one, i.e. the longest
    trace that yields any prefix.
    """
    classes = tuple(classes)
    cls_idx = {c: i for i, c in enumerate(classes)}
    if max_len is None:
        max_len = max((len(p) for p in prefixes), default=0) + 1
    n = len(prefixes)
    X = np.zeros((n, max_len, layout.width))
    Y = np.zeros((n, len(classes)))
    lengths = np.zeros(n, dtype=int)
    # prefixes of one trace share leading events, encode each event once
    cache: dict[str, list[np.ndarray]] = {}
    for i, p in enumerate(prefixes):
        k = len(p)
        if k > max_len:
            raise ValueError(f"prefix of length {k} exceeds max_len {max_len}")
        if p.label not in cls_idx:
            raise KeyError(f"label {p.label!r} not in the activity vocabulary")
        rows = cache.setdefault(p.case_id, [])
        if len(rows) < k:
            deltas = raw_time_deltas(p.events)
            for j in range(len(rows), k):
                rows.append(encode_event(p.events[j], deltas[j], layout))
        X[i, max_len - k :] = rows[:k]
        Y[i, cls_idx[p.label]] = 1.0
        lengths[i] = k
    return PrefixDataset(X, Y, lengths, tuple(p.case_id for p in prefixes), classes)


def build_dataset(log: EventLog, layout: FeatureLayout) -> PrefixDataset:
    return assemble_tensors(build_prefixes(log), layout, log.activity_vocabulary(), log.max_trace_len)


def flatten_for_mlp(X: np.ndarray) -> np.ndarray:
    return X.reshape(X.shape[0], -1)


_HEADER = struct.Struct("<4q")


def dump_tensors(ds: PrefixDataset, path: str | Path) -> None:
    """Flat little-endian dump: N, M, U, V as int64, then X and Y as float64."""
    n, m, u = ds.X.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(n, m, u, ds.Y.shape[1]))
        fh.write(np.ascontiguousarray(ds.X, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.Y, dtype="<f8").tobytes())


def load_tensor_dump(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    buf = Path(path).read_bytes()
    n, m, u, v = _HEADER.unpack_from(buf)
    off = _HEADER.size
    X = np.frombuffer(buf, dtype="<f8", count=n * m * u, offset=off).reshape(n, m, u)
    Y = np.frombuffer(buf, dtype="<f8", count=n * v, offset=off + 8 * n * m * u).reshape(n, v)
    return X.copy(), Y.copy()


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int

    def cases(self, fold: int) -> list[str]:
        return [c for c, f in self.assignment.items() if f == fold]

    def sizes(self) -> list[int]:
        return [len(self.cases(f)) for f in range(self.k)]


def plan_folds(case_ids: Sequence[str], k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle cases under ``seed`` and deal them round-robin into ``k`` folds."""
    case_ids = list(case_ids)
    if len(case_ids) < k:
        raise ValueError(f"{len(case_ids)} cases cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(len(case_ids))
    return FoldPlan(k, {case_ids[j]: pos % k for pos, j in enumerate(perm)}, seed)
