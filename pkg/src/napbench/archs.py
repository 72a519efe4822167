"""The three benchmark architectures as layer descriptors, and their instantiation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .nncore import (
    LSTM,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    Linear,
    MaxPool1D,
    Network,
    ReLU,
    Softmax,
)

ARCHITECTURES = ("mlp", "lstm", "cnn")


@dataclass(frozen=True)
class NetworkSpec:
    kind: str
    input_shape: tuple[int, ...]  # (F,) for the MLP, (M, U) otherwise
    n_classes: int
    layers: tuple[tuple[str, dict[str, Any]], ...]
    dropout: tuple[float, ...] = ()
    hidden: tuple[int, ...] = ()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        d = json.loads(text)
        return cls(
            d["kind"],
            tuple(d["input_shape"]),
            d["n_classes"],
            tuple((k, p) for k, p in d["layers"]),
            tuple(d["dropout"]),
            tuple(d["hidden"]),
        )


def build_mlp(flat_width: int, n_classes: int, hidden=(300, 200, 100, 50), dropout: float = 0.5) -> NetworkSpec:
    layers: list[tuple[str, dict]] = [("flatten", {})]
    for h in hidden:
        layers += [("dense", {"units": h}), ("batchnorm", {}), ("relu", {}), ("dropout", {"rate": dropout})]
    layers += [("dense", {"units": n_classes}), ("softmax", {})]
    return NetworkSpec("mlp", (flat_width,), n_classes, tuple(layers), (dropout,) * len(hidden), tuple(hidden))


def build_lstm(max_len: int, width: int, n_classes: int, hidden: int = 100, dropout: float = 0.2) -> NetworkSpec:
    layers = (
        ("lstm", {"units": hidden}),
        ("batchnorm", {}),
        ("linear", {}),
        ("dropout", {"rate": dropout}),
        ("dense", {"units": n_classes}),
        ("softmax", {}),
    )
    return NetworkSpec("lstm", (max_len, width), n_classes, layers, (dropout,), (hidden,))


def build_cnn(
    max_len: int,
    width: int,
    n_classes: int,
    filters: int = 64,
    kernel: int = 3,
    pool: int = 2,
    blocks: int = 5,
    dense: int = 100,
) -> NetworkSpec:
    layers: list[tuple[str, dict]] = []
    for _ in range(blocks):
        layers += [
            ("conv1d", {"filters": filters, "kernel": kernel}),
            ("batchnorm", {}),
            ("relu", {}),
            ("maxpool1d", {"pool": pool}),
        ]
    layers += [("flatten", {}), ("dense", {"units": dense}), ("relu", {}), ("dense", {"units": n_classes}), ("softmax", {})]
    return NetworkSpec("cnn", (max_len, width), n_classes, tuple(layers), (), (filters,) * blocks + (dense,))


def build_spec(kind: str, max_len: int, width: int, n_classes: int) -> NetworkSpec:
    """Benchmark-sized architecture for an (M, U) input."""
    if kind == "mlp":
        return build_mlp(max_len * width, n_classes)
    if kind == "lstm":
        return build_lstm(max_len, width, n_classes)
    if kind == "cnn":
        return build_cnn(max_len, width, n_classes)
    raise ValueError(f"unknown architecture {kind!r}")


def temporal_lengths(spec: NetworkSpec) -> list[int]:
    """Time-axis length after each pooling layer of a CNN."""
    m = spec.input_shape[0]
    out = []
    for kind, p in spec.layers:
        if kind == "maxpool1d":
            m = MaxPool1D.out_len(m, p["pool"])
            out.append(m)
    return out


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    """Instantiate ``spec``; identical ``seed`` gives identical initial parameters."""
    rng = np.random.default_rng(seed)
    shape = tuple(spec.input_shape)
    layers = []
    for kind, p in spec.layers:
        if kind == "flatten":
            layer = Flatten()
            shape = (int(np.prod(shape)),)
        elif kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"dense layer needs a flat input, got {shape}")
            layer = Dense(shape[0], p["units"], rng)
            shape = (p["units"],)
        elif kind == "batchnorm":
            layer = BatchNorm(shape[-1])
        elif kind == "relu":
            layer = ReLU()
        elif kind == "linear":
            layer = Linear()
        elif kind == "dropout":
            layer = Dropout(p["rate"], np.random.default_rng(rng.integers(2**63)))
        elif kind == "lstm":
            layer = LSTM(shape[-1], p["units"], rng)
            shape = (p["units"],)
        elif kind == "conv1d":
            layer = Conv1D(shape[-1], p["filters"], p["kernel"], rng)
            shape = (shape[0], p["filters"])
        elif kind == "maxpool1d":
            layer = MaxPool1D(p["pool"])
            shape = (MaxPool1D.out_len(shape[0], p["pool"]), shape[1])
        elif kind == "softmax":
            layer = Softmax()
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        layers.append(layer)
    if spec.layers[-1][0] != "softmax" or shape != (spec.n_classes,):
        raise ValueError("network must end in a dense layer of n_classes followed by softmax")
    return Network(layers, rng)


def mlp_param_count(flat_width: int, n_classes: int, hidden=(300, 200, 100, 50)) -> int:
    widths = (flat_width, *hidden)
    dense = sum(a * b + b for a, b in zip(widths, widths[1:])) + hidden[-1] * n_classes + n_classes
    return dense + 2 * sum(hidden)
