"""Mini-batch training with early stopping, and the instance-based k-fold cross-validation loop."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .archs import NetworkSpec, build_network, build_spec
from .dataset import PrefixDataset, build_dataset, fit_time_scaler, flatten_for_mlp, plan_folds
from .encode import build_layout, fit_encoders
from .evaluate import FoldResult, compute_metrics
from .eventlog import EventLog
from .nncore import Network, OptimizerState, cross_entropy, optimizer_step, save_checkpoint

OPTIMIZERS = {"mlp": ("adam", 0.001), "lstm": ("nadam", 0.002), "cnn": ("adam", 0.001)}


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 128
    patience: int = 10
    optimizer: str = "adam"
    lr: float = 0.001

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 for batch normalisation")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed the epoch budget")

    @classmethod
    def for_arch(cls, kind: str, **overrides) -> "TrainingConfig":
        opt, lr = OPTIMIZERS[kind]
        kw: dict[str, Any] = {"optimizer": opt, "lr": lr}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        if "epochs" in kw and "patience" not in kw:
            kw["patience"] = min(cls.patience, kw["epochs"])
        return cls(**kw)


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    stopped_at: int = 0

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch - 1]


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to strictly lower the best validation loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0
        self.epoch = 0

    def update(self, loss: float) -> bool:
        """Record one epoch; True when it is the new best."""
        self.epoch += 1
        if loss < self.best:
            self.best, self.best_epoch, self.wait = loss, self.epoch, 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.wait >= self.patience


@dataclass(eq=False)
class TrainedModel:
    spec: NetworkSpec
    network: Network
    history: TrainingHistory
    encoders: dict | None = None
    layout: Any = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.network.predict(model_inputs(self.spec, X))


def model_inputs(spec: NetworkSpec, X: np.ndarray) -> np.ndarray:
    return flatten_for_mlp(X) if spec.kind == "mlp" else X


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing batch smaller than 2 joins the previous one."""
    perm = rng.permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def evaluate_loss(network: Network, x: np.ndarray, y: np.ndarray) -> float:
    return cross_entropy(network.predict(x), y)


def train(
    spec: NetworkSpec,
    train_set: PrefixDataset,
    val_set: PrefixDataset,
    config: TrainingConfig = TrainingConfig(),
    seed: int = 0,
) -> TrainedModel:
    if len(train_set) < 2:
        raise ValueError("training set needs at least 2 prefixes")
    if len(val_set) == 0:
        raise ValueError("validation set is empty")
    network = build_network(spec, seed)
    rng = np.random.default_rng(seed + 1)
    opt = OptimizerState(config.optimizer, config.lr)
    xt, yt = model_inputs(spec, train_set.X), train_set.Y
    xv, yv = model_inputs(spec, val_set.X), val_set.Y

    history = TrainingHistory()
    stopper = EarlyStopping(config.patience)
    best_state = network.state()
    for epoch in range(1, config.epochs + 1):
        total = 0.0
        for idx in minibatches(len(xt), config.batch_size, rng):
            total += network.loss_and_grads(xt[idx], yt[idx]) * len(idx)
            optimizer_step(network, opt)
        history.train_loss.append(total / len(xt))
        val = evaluate_loss(network, xv, yv)
        history.val_loss.append(val)
        if stopper.update(val):
            best_state = network.state()
        history.stopped_at = epoch
        if stopper.should_stop:
            break
    history.best_epoch = stopper.best_epoch
    network.load_state(best_state)
    return TrainedModel(spec, network, history)


def split_validation(cases: list[str], fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Instance-based split: ceil(fraction * n) cases, at least one, go to validation."""
    n_val = max(1, math.ceil(fraction * len(cases)))
    perm = np.random.default_rng(seed).permutation(len(cases))
    val = {cases[i] for i in perm[:n_val]}
    return [c for c in cases if c not in val], [c for c in cases if c in val]


@dataclass(frozen=True, eq=False)
class PreparedLog:
    dataset: PrefixDataset
    encoders: dict
    layout: Any
    case_ids: tuple[str, ...]


def prepare(log: EventLog, technique: str, seed: int = 0) -> PreparedLog:
    """Fit encoders on the whole log and assemble every prefix once."""
    encoders = fit_encoders(log, technique, seed)
    layout = build_layout(log.schema, technique, encoders, fit_time_scaler(log))
    return PreparedLog(build_dataset(log, layout), encoders, layout, log.case_ids)


def run_fold(
    prepared: PreparedLog,
    kind: str,
    fold: int,
    test_cases,
    seed: int = 0,
    config: TrainingConfig | None = None,
    val_fraction: float = 0.1,
) -> tuple[FoldResult, TrainedModel, dict]:
    """Train on every case outside ``test_cases`` (minus a validation share) and score the held-out ones."""
    config = config or TrainingConfig.for_arch(kind)
    ds = prepared.dataset
    test = set(test_cases)
    remaining = [c for c in prepared.case_ids if c not in test]
    train_cases, val_cases = split_validation(remaining, val_fraction, seed + fold)
    train_ds, val_ds, test_ds = ds.select_cases(train_cases), ds.select_cases(val_cases), ds.select_cases(test)
    M, U = ds.X.shape[1:]
    spec = build_spec(kind, M, U, len(ds.classes))
    model = train(spec, train_ds, val_ds, config, seed + fold)
    result = compute_metrics(model.predict(test_ds.X), test_ds.Y, ds.classes, fold=fold)
    result = replace(result, epochs=model.history.stopped_at, val_loss=model.history.best_val_loss)
    split = {"train": len(train_cases), "validation": len(val_cases), "test": len(test)}
    return result, model, split


def _fold_job(args) -> tuple[FoldResult, TrainedModel, dict]:
    return run_fold(*args)


def run_cross_validation(
    log: EventLog,
    kind: str,
    technique: str,
    k: int = 10,
    seed: int = 0,
    config: TrainingConfig | None = None,
    run_dir: str | Path | None = None,
    jobs: int = 1,
    val_fraction: float = 0.1,
    prepared: PreparedLog | None = None,
) -> list[FoldResult]:
    """k-fold instance-based cross-validation of one (architecture, technique) cell.

    Fold ``f`` trains with seed ``seed + f``. With ``run_dir`` set, each
    fold's best checkpoint and history land there next to a manifest.
    """
    config = config or TrainingConfig.for_arch(kind)
    prepared = prepared or prepare(log, technique, seed)
    plan = plan_folds(prepared.case_ids, k, seed)
    jobs_args = [(prepared, kind, f, plan.cases(f), seed, config, val_fraction) for f in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            outs = list(pool.map(_fold_job, jobs_args))
    else:
        outs = [_fold_job(a) for a in jobs_args]

    if run_dir is not None:
        _write_run(Path(run_dir), log, kind, technique, seed, config, outs)
    return [o[0] for o in outs]


def _write_run(run_dir: Path, log: EventLog, kind, technique, seed, config, outs) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    folds = []
    for result, model, split in outs:
        f = result.fold
        save_checkpoint(model.network.state(), run_dir / f"fold{f}.ckpt")
        h = model.history
        (run_dir / f"fold{f}.history.json").write_text(
            json.dumps(
                {"train_loss": h.train_loss, "val_loss": h.val_loss, "best_epoch": h.best_epoch, "stopped_at": h.stopped_at}
            ),
            encoding="utf-8",
        )
        folds.append({"fold": f, "seed": seed + f, "split": split, "checkpoint": f"fold{f}.ckpt"})
    manifest = {
        "architecture": kind,
        "technique": technique,
        "seed": seed,
        "n_cases": len(log),
        "training": asdict(config),
        "spec": json.loads(outs[0][1].spec.to_json()),
        "folds": folds,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
