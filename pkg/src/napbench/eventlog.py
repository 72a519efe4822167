"""Event-log data model, CSV ingestion, imputation, filters and descriptive statistics."""

from __future__ import annotations

import csv
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

NUMERICAL = "numerical"
CATEGORICAL = "categorical"


class EventLogError(ValueError):
    """Base class for ingestion and validation failures."""


class SchemaError(EventLogError):
    pass


class RowError(EventLogError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EmptyLogError(EventLogError):
    pass


@dataclass(frozen=True)
class Event:
    activity: str
    case_id: str
    timestamp: datetime
    context: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.activity:
            raise EventLogError(f"event of case {self.case_id!r} has an empty activity")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise EventLogError(f"trace {self.case_id!r} is empty")
        for i, e in enumerate(self.events):
            if e.case_id != self.case_id:
                raise EventLogError(f"trace {self.case_id!r} holds an event of case {e.case_id!r}")
            if i and e.timestamp < self.events[i - 1].timestamp:
                raise EventLogError(f"trace {self.case_id!r} is not ordered by timestamp")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)


@dataclass(frozen=True)
class AttributeInfo:
    name: str
    kind: str
    distinct: int
    missing: int
    # "event" or "process" level; recorded only, never acted upon
    level: str | None = None


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple[AttributeInfo, ...]
    case_col: str = "case_id"
    activity_col: str = "activity"
    timestamp_col: str = "timestamp"

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def numerical(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.kind == NUMERICAL)

    @property
    def categorical(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.kind == CATEGORICAL)

    def __getitem__(self, name: str) -> AttributeInfo:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    schema: AttributeSchema

    def __post_init__(self):
        seen = set()
        for t in self.traces:
            if t.case_id in seen:
                raise EventLogError(f"duplicate case id {t.case_id!r}")
            seen.add(t.case_id)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def case_ids(self) -> tuple[str, ...]:
        return tuple(t.case_id for t in self.traces)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    @property
    def max_trace_len(self) -> int:
        return max((len(t) for t in self.traces), default=0)

    def activity_vocabulary(self) -> tuple[str, ...]:
        """Activity labels in order of first appearance."""
        seen: dict[str, None] = {}
        for t in self.traces:
            for e in t.events:
                seen.setdefault(e.activity, None)
        return tuple(seen)

    def events(self) -> Iterable[Event]:
        for t in self.traces:
            yield from t.events

    def subset(self, case_ids: Iterable[str]) -> "EventLog":
        keep = set(case_ids)
        return replace(self, traces=tuple(t for t in self.traces if t.case_id in keep))


@dataclass(frozen=True)
class ColumnMapping:
    case_id: str = "case_id"
    activity: str = "activity"
    timestamp: str = "timestamp"


@dataclass(frozen=True)
class Distribution:
    min: float
    max: float
    mean: float
    median: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Distribution":
        return cls(min(values), max(values), statistics.fmean(values), statistics.median(values))


@dataclass(frozen=True)
class LogStats:
    instances: int
    variants: int
    ratio: float
    activity_classes: int
    events: int
    events_per_instance: Distribution
    activities_per_instance: Distribution
    attributes_total: int
    attributes_numerical: int
    attributes_categorical: int
    distinct_values: dict[str, int]


def is_missing(value: Any) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def _to_float(value: Any) -> float | None:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) if math.isfinite(value) else None
    try:
        v = float(value)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def _parse_timestamp(raw: str, fmt: str | None) -> datetime:
    raw = raw.strip()
    if fmt is None:
        return datetime.fromisoformat(raw)
    return datetime.strptime(raw, fmt)


def parse_csv(
    path: str | Path,
    mapping: ColumnMapping = ColumnMapping(),
    timestamp_format: str | None = None,
    delimiter: str = ",",
    missing_sentinel: str = "NA",
    numeric_threshold: float = 1.0,
) -> EventLog:
    """Read a CSV event log; every unmapped column becomes a context attribute.

    ``timestamp_format`` is a ``strptime`` pattern; ``None`` means ISO-8601.
    Events of a case are sorted by timestamp, ties kept in file order.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise EmptyLogError(f"{path} is empty")
        header = [h.strip() for h in header]
        for col in (mapping.case_id, mapping.activity, mapping.timestamp):
            if col not in header:
                raise SchemaError(f"mapped column {col!r} not found in {path}")
        i_case = header.index(mapping.case_id)
        i_act = header.index(mapping.activity)
        i_ts = header.index(mapping.timestamp)
        ctx_cols = [(i, h) for i, h in enumerate(header) if i not in (i_case, i_act, i_ts)]

        cases: dict[str, list[tuple[datetime, int, Event]]] = {}
        for row_no, row in enumerate(reader):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RowError(row_no, f"expected {len(header)} fields, got {len(row)}")
            try:
                ts = _parse_timestamp(row[i_ts], timestamp_format)
            except ValueError as exc:
                raise RowError(row_no, f"unparseable timestamp {row[i_ts]!r}") from exc
            activity = row[i_act].strip()
            if not activity or activity == missing_sentinel:
                raise RowError(row_no, "missing activity")
            ctx = {}
            for i, name in ctx_cols:
                v = row[i].strip()
                ctx[name] = None if v == "" or v == missing_sentinel else v
            case = row[i_case].strip()
            cases.setdefault(case, []).append((ts, row_no, Event(activity, case, ts, ctx)))

    if not cases:
        raise EmptyLogError(f"{path} holds no events")
    traces = []
    for case, rows in cases.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        traces.append(Trace(case, tuple(r[2] for r in rows)))
    schema = AttributeSchema(
        tuple(AttributeInfo(h, CATEGORICAL, 0, 0) for _, h in ctx_cols),
        mapping.case_id,
        mapping.activity,
        mapping.timestamp,
    )
    log = EventLog(tuple(traces), schema)
    return replace(log, schema=infer_schema(log, numeric_threshold))


def write_csv(log: EventLog, path: str | Path, missing_sentinel: str = "NA") -> None:
    """Inverse of :func:`parse_csv` (ISO timestamps)."""
    s = log.schema
    names = s.names
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([s.case_col, s.activity_col, s.timestamp_col, *names])
        for t in log.traces:
            for e in t.events:
                ctx = []
                for n in names:
                    v = e.context.get(n)
                    ctx.append(missing_sentinel if is_missing(v) else (repr(v) if isinstance(v, float) else v))
                w.writerow([e.case_id, e.activity, e.timestamp.isoformat(), *ctx])


def infer_schema(log: EventLog, numeric_threshold: float = 1.0) -> AttributeSchema:
    """Classify each context attribute as numerical or categorical.

    An attribute is numerical when at least ``numeric_threshold`` of its
    non-missing values parse as finite numbers.
    """
    infos = []
    for info in log.schema.attributes:
        values = [e.context.get(info.name) for e in log.events()]
        present = [v for v in values if not is_missing(v)]
        n_missing = len(values) - len(present)
        n_numeric = sum(_to_float(v) is not None for v in present)
        numeric = bool(present) and n_numeric >= numeric_threshold * len(present)
        if numeric:
            distinct = len({_to_float(v) for v in present})
        else:
            distinct = len({str(v) for v in present})
        infos.append(replace(info, kind=NUMERICAL if numeric else CATEGORICAL, distinct=distinct, missing=n_missing))
    return replace(log.schema, attributes=tuple(infos))


def _with_context(log: EventLog, fn) -> EventLog:
    traces = tuple(
        Trace(t.case_id, tuple(replace(e, context=fn(e.context)) for e in t.events)) for t in log.traces
    )
    return replace(log, traces=traces)


def impute_missing(log: EventLog, schema: AttributeSchema | None = None) -> EventLog:
    """Fill missing context values: mean for numerical, mode for categorical.

    Numerical attributes come back as floats. Mode ties go to the
    lexicographically smallest value.
    """
    schema = schema or log.schema
    fill: dict[str, Any] = {}
    for info in schema.attributes:
        present = [e.context.get(info.name) for e in log.events()]
        present = [v for v in present if not is_missing(v)]
        if not present:
            raise EventLogError(f"attribute {info.name!r} has no values to impute from")
        if info.kind == NUMERICAL:
            fill[info.name] = statistics.fmean(_to_float(v) for v in present)
        else:
            counts = Counter(str(v) for v in present)
            top = max(counts.values())
            fill[info.name] = min(v for v, c in counts.items() if c == top)

    def fix(ctx):
        out = dict(ctx)
        for info in schema.attributes:
            v = ctx.get(info.name)
            if is_missing(v):
                out[info.name] = fill[info.name]
            elif info.kind == NUMERICAL:
                out[info.name] = _to_float(v)
            else:
                out[info.name] = str(v)
        return out

    imputed = _with_context(log, fix)
    attrs = tuple(replace(a, missing=0) for a in schema.attributes)
    return replace(imputed, schema=replace(schema, attributes=attrs))


def filter_high_cardinality(log: EventLog, max_values: int = 600, include_numerical: bool = False) -> EventLog:
    """Drop context attributes with more than ``max_values`` distinct values.

    Numerical attributes are exempt unless ``include_numerical`` is set.
    """
    drop = {
        a.name
        for a in log.schema.attributes
        if a.distinct > max_values and (include_numerical or a.kind == CATEGORICAL)
    }
    if not drop:
        return log
    kept = tuple(a for a in log.schema.attributes if a.name not in drop)
    out = _with_context(log, lambda ctx: {k: v for k, v in ctx.items() if k not in drop})
    return replace(out, schema=replace(log.schema, attributes=kept))


def truncate_and_sample(
    log: EventLog, max_trace_len: float = math.inf, sample_fraction: float = 1.0, seed: int = 0
) -> EventLog:
    """Remove traces longer than ``max_trace_len``, then keep a seeded uniform sample."""
    if not 0 < sample_fraction <= 1:
        raise ValueError("sample_fraction must lie in (0, 1]")
    short = [t for t in log.traces if len(t) <= max_trace_len]
    n_keep = math.ceil(sample_fraction * len(short))
    if n_keep < len(short):
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(short), size=n_keep, replace=False))
        short = [short[i] for i in idx]
    out = replace(log, traces=tuple(short))
    return replace(out, schema=_recount(out))


def _recount(log: EventLog) -> AttributeSchema:
    kinds = {a.name: a for a in log.schema.attributes}
    fresh = infer_schema(log)
    attrs = tuple(replace(kinds[a.name], distinct=a.distinct, missing=a.missing) for a in fresh.attributes)
    return replace(log.schema, attributes=attrs)


def compute_statistics(log: EventLog) -> LogStats:
    if not log.traces:
        raise EmptyLogError("cannot describe an empty log")
    lengths = [len(t) for t in log.traces]
    n_acts = [len(set(t.activities)) for t in log.traces]
    variants = len({t.activities for t in log.traces})
    s = log.schema
    return LogStats(
        instances=len(log.traces),
        variants=variants,
        ratio=len(log.traces) / variants,
        activity_classes=len(log.activity_vocabulary()),
        events=sum(lengths),
        events_per_instance=Distribution.of(lengths),
        activities_per_instance=Distribution.of(n_acts),
        attributes_total=len(s.attributes),
        attributes_numerical=len(s.numerical),
        attributes_categorical=len(s.categorical),
        distinct_values={a.name: a.distinct for a in s.attributes},
    )


def preprocess(
    log: EventLog,
    max_values: int = 600,
    max_trace_len: float = math.inf,
    sample_fraction: float = 1.0,
    seed: int = 0,
) -> EventLog:
    """Standard pipeline: truncate/sample, drop high-cardinality attributes, impute."""
    if max_trace_len != math.inf or sample_fraction < 1:
        log = truncate_and_sample(log, max_trace_len, sample_fraction, seed)
    log = filter_high_cardinality(log, max_values)
    return impute_missing(log)
