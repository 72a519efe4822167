"""Experiment configuration: an INI file mapped onto a dataclass.

Example::

    [log]
    path = data/grammar.csv
    name = grammar
    case_id = case_id
    activity = activity
    timestamp = timestamp
    timestamp_format =            ; empty means ISO-8601
    delimiter = ,                 ; or comma / semicolon / tab / pipe
    missing = NA

    [filters]
    max_values = 600
    max_trace_len =               ; empty means no limit
    sample_fraction = 1.0

    [experiment]
    architectures = mlp, lstm, cnn
    techniques = ordinal, binary, onehot, hash, word2vec
    folds = 10
    seed = 0
    out = runs/grammar

    [training]
    epochs = 100
    batch_size = 128
    patience = 10
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .archs import ARCHITECTURES
from .encode import TECHNIQUES


@dataclass(frozen=True)
class ExperimentConfig:
    log_path: str
    log_name: str = ""
    case_col: str = "case_id"
    activity_col: str = "activity"
    timestamp_col: str = "timestamp"
    timestamp_format: str | None = None
    delimiter: str = ","
    missing: str = "NA"
    max_values: int = 600
    max_trace_len: float = math.inf
    sample_fraction: float = 1.0
    architectures: tuple[str, ...] = ARCHITECTURES
    techniques: tuple[str, ...] = TECHNIQUES
    folds: int = 10
    seed: int = 0
    out_dir: str = "runs/out"
    epochs: int | None = None
    batch_size: int | None = None
    patience: int | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.architectures or not self.techniques:
            raise ValueError("architecture and technique lists must be non-empty")
        bad = set(self.architectures) - set(ARCHITECTURES) | set(self.techniques) - set(TECHNIQUES)
        if bad:
            raise ValueError(f"unknown architectures/techniques: {sorted(bad)}")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if not self.log_name:
            object.__setattr__(self, "log_name", Path(self.log_path).stem)

    def hash(self) -> str:
        """Digest of every field that can change an emitted number."""
        d = asdict(self)
        for k in ("out_dir", "jobs"):
            d.pop(k)
        d["max_trace_len"] = str(d["max_trace_len"])
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ";" starts an inline comment, so named delimiters are accepted too
_DELIMITERS = {"comma": ",", "semicolon": ";", "tab": "\t", "pipe": "|"}


def _list(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _opt(section, key, conv, default):
    raw = section.get(key, fallback="").strip() if section is not None else ""
    return conv(raw) if raw else default


def load_config(path: str | Path) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    log = cp["log"] if cp.has_section("log") else None
    filt = cp["filters"] if cp.has_section("filters") else None
    exp = cp["experiment"] if cp.has_section("experiment") else None
    tr = cp["training"] if cp.has_section("training") else None
    if log is None or not log.get("path"):
        raise ValueError(f"{path}: [log] path is required")
    base = Path(path).parent

    def resolve(p: str) -> str:
        # relative paths are taken from the config file's directory
        return str(p if Path(p).is_absolute() else base / p)

    return ExperimentConfig(
        log_path=resolve(log["path"]),
        log_name=_opt(log, "name", str, ""),
        case_col=_opt(log, "case_id", str, "case_id"),
        activity_col=_opt(log, "activity", str, "activity"),
        timestamp_col=_opt(log, "timestamp", str, "timestamp"),
        timestamp_format=_opt(log, "timestamp_format", str, None),
        delimiter=_opt(log, "delimiter", lambda v: _DELIMITERS.get(v, v), ","),
        missing=_opt(log, "missing", str, "NA"),
        max_values=_opt(filt, "max_values", int, 600),
        max_trace_len=_opt(filt, "max_trace_len", float, math.inf),
        sample_fraction=_opt(filt, "sample_fraction", float, 1.0),
        architectures=_opt(exp, "architectures", _list, ARCHITECTURES),
        techniques=_opt(exp, "techniques", _list, TECHNIQUES),
        folds=_opt(exp, "folds", int, 10),
        seed=_opt(exp, "seed", int, 0),
        out_dir=_opt(exp, "out", resolve, "runs/out"),
        epochs=_opt(tr, "epochs", int, None),
        batch_size=_opt(tr, "batch_size", int, None),
        patience=_opt(tr, "patience", int, None),
    )


def with_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
