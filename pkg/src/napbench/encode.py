"""Categorical encoders (ordinal, binary, onehot, hash, word2vec), min-max scaling and the event-vector layout.

Every encoder maps unknown or missing values to an all-zero vector, so
padding never collides with a real category.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .eventlog import NUMERICAL, AttributeSchema, EventLog, is_missing

TECHNIQUES = ("ordinal", "binary", "onehot", "hash", "word2vec")
HASH_DIMS = 10
W2V_DIMS = 32


@dataclass(frozen=True, eq=False)
class FittedEncoder:
    technique: str
    attribute: str
    vocabulary: tuple[str, ...]
    width: int
    params: Mapping[str, Any] = field(default_factory=dict)
    # (K+1) x width lookup, row 0 is the zero vector; None for hash
    table: np.ndarray | None = None

    @cached_property
    def _index(self) -> dict[str, int]:
        return {v: i + 1 for i, v in enumerate(self.vocabulary)}

    def index(self, value: Any) -> int:
        """1-based vocabulary position, 0 for unknown/missing."""
        if is_missing(value):
            return 0
        return self._index.get(str(value), 0)

    def apply(self, value: Any) -> np.ndarray:
        if self.technique == "hash":
            out = np.zeros(self.width)
            if not is_missing(value):
                out[md5_bucket(str(value), self.width)] = 1.0
            return out
        return self.table[self.index(value)].copy()

    def to_dict(self) -> dict:
        d = {
            "technique": self.technique,
            "attribute": self.attribute,
            "vocabulary": list(self.vocabulary),
            "width": self.width,
            "params": dict(self.params),
        }
        if self.technique == "word2vec":
            d["embedding"] = self.table[1:].tolist()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "FittedEncoder":
        tech = d["technique"]
        if tech == "word2vec":
            emb = np.asarray(d["embedding"], dtype=float).reshape(len(d["vocabulary"]), d["width"])
            return _from_embedding(d["attribute"], d["vocabulary"], emb, d.get("params", {}))
        if tech == "hash":
            return fit_hash(dims=d["width"], attribute=d["attribute"])
        return FIT[tech](d["vocabulary"], attribute=d["attribute"])


def _vocab(values: Iterable[Any]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for v in values:
        if not is_missing(v):
            seen.setdefault(str(v), None)
    if not seen:
        raise ValueError("cannot fit an encoder on no values")
    return tuple(seen)


def fit_ordinal(values: Sequence[Any], attribute: str = "") -> FittedEncoder:
    vocab = _vocab(values)
    table = np.arange(len(vocab) + 1, dtype=float)[:, None]
    return FittedEncoder("ordinal", attribute, vocab, 1, {}, table)


def binary_width(k: int) -> int:
    return max(1, math.ceil(math.log2(k + 1)))


def fit_binary(values: Sequence[Any], attribute: str = "") -> FittedEncoder:
    vocab = _vocab(values)
    bits = binary_width(len(vocab))
    idx = np.arange(len(vocab) + 1)
    # big-endian bit expansion of the 1-based index
    table = ((idx[:, None] >> np.arange(bits - 1, -1, -1)) & 1).astype(float)
    return FittedEncoder("binary", attribute, vocab, bits, {"bits": bits}, table)


def fit_onehot(values: Sequence[Any], attribute: str = "") -> FittedEncoder:
    vocab = _vocab(values)
    table = np.vstack([np.zeros(len(vocab)), np.eye(len(vocab))])
    return FittedEncoder("onehot", attribute, vocab, len(vocab), {}, table)


def md5_bucket(value: str, dims: int) -> int:
    digest = hashlib.md5(value.encode("utf-8")).digest()
    return int.from_bytes(digest, "big") % dims


def fit_hash(values: Sequence[Any] = (), dims: int = HASH_DIMS, attribute: str = "") -> FittedEncoder:
    if dims < 1:
        raise ValueError("dims must be >= 1")
    return FittedEncoder("hash", attribute, (), dims, {"dims": dims}, None)


def _from_embedding(attribute: str, vocab: Sequence[str], emb: np.ndarray, params: Mapping) -> FittedEncoder:
    table = np.vstack([np.zeros((1, emb.shape[1])), emb])
    return FittedEncoder("word2vec", attribute, tuple(vocab), emb.shape[1], dict(params), table)


def train_word2vec(
    corpus: Sequence[Sequence[Any]],
    dims: int = W2V_DIMS,
    window: int = 5,
    epochs: int = 10,
    lr0: float = 0.025,
    lr_decay: float = 0.002,
    negative: int = 5,
    seed: int = 0,
    attribute: str = "",
) -> FittedEncoder:
    """CBOW word2vec with negative sampling.

    The learning rate is constant within an epoch and drops by ``lr_decay``
    per epoch. Input vectors start uniform in ``[-0.5/dims, 0.5/dims]``,
    output vectors at zero; negatives are drawn from the unigram^0.75
    distribution and a draw equal to the target is skipped. The returned
    encoder exposes the input embeddings.
    """
    sentences = [[str(v) for v in s if not is_missing(v)] for s in corpus]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise ValueError("word2vec needs a non-empty corpus")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    vocab = _vocab(v for s in sentences for v in s)
    index = {v: i for i, v in enumerate(vocab)}
    ids = [np.array([index[v] for v in s]) for s in sentences]
    n_tokens = sum(len(s) for s in ids)

    rng = np.random.default_rng(seed)
    syn0 = (rng.random((len(vocab), dims)) - 0.5) / dims
    syn1 = np.zeros((len(vocab), dims))
    counts = np.bincount(np.concatenate(ids), minlength=len(vocab)).astype(float)
    noise = counts**0.75
    cum = np.cumsum(noise / noise.sum())

    labels = np.zeros(negative + 1)
    labels[0] = 1.0
    for epoch in range(epochs):
        alpha = max(lr0 - epoch * lr_decay, 0.0)
        draws = np.searchsorted(cum, rng.random((n_tokens, negative)), side="right")
        draws = np.minimum(draws, len(vocab) - 1)
        pos = 0
        for sent in ids:
            n = len(sent)
            for j in range(n):
                neg = draws[pos]
                pos += 1
                ctx = np.concatenate([sent[max(0, j - window) : j], sent[j + 1 : j + 1 + window]])
                if ctx.size == 0:
                    continue
                word = sent[j]
                targets = np.concatenate([[word], neg[neg != word]])
                lab = labels[: len(targets)]
                h = syn0[ctx].mean(axis=0)
                f = 1.0 / (1.0 + np.exp(-(syn1[targets] @ h)))
                g = (lab - f) * alpha
                neu1e = g @ syn1[targets]
                np.add.at(syn1, targets, np.outer(g, h))
                np.add.at(syn0, ctx, neu1e)
    params = {"window": window, "epochs": epochs, "lr0": lr0, "lr_decay": lr_decay, "negative": negative, "seed": seed}
    return _from_embedding(attribute, vocab, syn0, params)


@dataclass(frozen=True)
class NumericScaler:
    attribute: str
    min: float
    max: float

    width = 1

    def transform(self, value: float) -> float:
        if is_missing(value) or self.max == self.min:
            return 0.0
        return min(1.0, max(0.0, (float(value) - self.min) / (self.max - self.min)))

    def apply(self, value: float) -> np.ndarray:
        return np.array([self.transform(value)])

    def to_dict(self) -> dict:
        return {"technique": "minmax", "attribute": self.attribute, "min": self.min, "max": self.max}


def fit_scaler(values: Sequence[float], attribute: str = "") -> NumericScaler:
    arr = np.asarray([float(v) for v in values if not is_missing(v)], dtype=float)
    if arr.size == 0:
        raise ValueError("cannot fit a scaler on no values")
    return NumericScaler(attribute, float(arr.min()), float(arr.max()))


FIT = {"ordinal": fit_ordinal, "binary": fit_binary, "onehot": fit_onehot}


def fit_categorical(technique: str, log: EventLog, attribute: str, seed: int = 0) -> FittedEncoder:
    """Fit one encoder for ``attribute`` (the activity column or a categorical context attribute)."""
    is_activity = attribute == log.schema.activity_col

    def value(e):
        return e.activity if is_activity else e.context.get(attribute)

    if technique == "hash":
        return fit_hash(attribute=attribute)
    if technique == "word2vec":
        corpus = [[value(e) for e in t.events] for t in log.traces]
        return train_word2vec(corpus, seed=seed, attribute=attribute)
    if technique not in FIT:
        raise ValueError(f"unknown encoding technique {technique!r}")
    return FIT[technique]([value(e) for e in log.events()], attribute=attribute)


def fit_encoders(log: EventLog, technique: str, seed: int = 0) -> dict[str, FittedEncoder | NumericScaler]:
    """One encoder per categorical attribute (activity included) and one scaler per numerical attribute."""
    s = log.schema
    out: dict[str, FittedEncoder | NumericScaler] = {s.activity_col: fit_categorical(technique, log, s.activity_col, seed)}
    for i, info in enumerate(s.attributes):
        if info.kind == NUMERICAL:
            out[info.name] = fit_scaler([e.context[info.name] for e in log.events()], info.name)
        else:
            out[info.name] = fit_categorical(technique, log, info.name, seed + i + 1)
    return out


@dataclass(frozen=True)
class Block:
    name: str
    role: str  # "activity" | "time" | "context"
    transformer: FittedEncoder | NumericScaler
    start: int
    stop: int


@dataclass(frozen=True)
class FeatureLayout:
    technique: str
    blocks: tuple[Block, ...]

    @property
    def width(self) -> int:
        return self.blocks[-1].stop if self.blocks else 0

    @property
    def activity(self) -> Block:
        return self.blocks[0]

    @property
    def time(self) -> Block:
        return self.blocks[1]

    @property
    def context(self) -> tuple[Block, ...]:
        return self.blocks[2:]


TIME_DELTA = "__time_delta__"


def build_layout(
    schema: AttributeSchema,
    technique: str,
    encoders: Mapping[str, FittedEncoder | NumericScaler],
    time_scaler: NumericScaler | None = None,
) -> FeatureLayout:
    """Column layout of an event vector: activity block, time delta, context attributes in schema order."""
    if technique not in TECHNIQUES:
        raise ValueError(f"unknown encoding technique {technique!r}")
    time_scaler = time_scaler or encoders.get(TIME_DELTA) or NumericScaler(TIME_DELTA, 0.0, 0.0)
    parts = [(schema.activity_col, "activity")]
    parts += [(n, "context") for n in schema.names]
    blocks, col = [], 0
    for i, (name, role) in enumerate(parts):
        if name not in encoders:
            raise KeyError(f"no encoder fitted for attribute {name!r}")
        tr = encoders[name]
        blocks.append(Block(name, role, tr, col, col + tr.width))
        col += tr.width
        if i == 0:
            blocks.append(Block(TIME_DELTA, "time", time_scaler, col, col + 1))
            col += 1
    return FeatureLayout(technique, tuple(blocks))


def save_encoders(encoders: Mapping[str, FittedEncoder | NumericScaler], path: str | Path) -> None:
    payload = {name: enc.to_dict() for name, enc in encoders.items()}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")


def load_encoders(path: str | Path) -> dict[str, FittedEncoder | NumericScaler]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for name, d in payload.items():
        if d["technique"] == "minmax":
            out[name] = NumericScaler(d["attribute"], d["min"], d["max"])
        else:
            out[name] = FittedEncoder.from_dict(d)
    return out
