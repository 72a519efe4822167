"""Experiment runner: the (architecture x technique) grid, report files and the command line."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config, with_overrides
from .evaluate import METRICS, FoldResult, MetricSet, SignificanceReport, aggregate_folds, load_score_matrix, nemenyi_test
from .eventlog import ColumnMapping, EventLog, LogStats, compute_statistics, parse_csv, preprocess
from .trainer import TrainingConfig, prepare, run_cross_validation

log = logging.getLogger("napbench")

FOLD_COLUMNS = ("log", "arch", "technique", "fold", "accuracy", "f1", "auc_pr", "epochs", "val_loss")


def fmt(x: float) -> str:
    """Shortest round-trip representation; used for raw fold values."""
    return repr(float(x))


def fmt_summary(x: float) -> str:
    return format(float(x), ".12g")


@dataclass
class BenchmarkReport:
    log_name: str
    stats: LogStats
    architectures: tuple[str, ...]
    techniques: tuple[str, ...]
    folds: dict[tuple[str, str], list[FoldResult]] = field(default_factory=dict)
    failures: dict[tuple[str, str], str] = field(default_factory=dict)
    significance: dict[str, SignificanceReport] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def summaries(self) -> dict[tuple[str, str], MetricSet]:
        return {cell: aggregate_folds(res) for cell, res in self.folds.items()}

    @property
    def ok(self) -> bool:
        return not self.failures


def load_log(config: ExperimentConfig) -> EventLog:
    mapping = ColumnMapping(config.case_col, config.activity_col, config.timestamp_col)
    raw = parse_csv(config.log_path, mapping, config.timestamp_format, config.delimiter, config.missing)
    return preprocess(raw, config.max_values, config.max_trace_len, config.sample_fraction, config.seed)


def significance_over_cells(folds: dict[tuple[str, str], list[FoldResult]]) -> dict[str, SignificanceReport]:
    """Friedman/Nemenyi with folds as blocks and grid cells as treatments."""
    cells = sorted(folds)
    if len(cells) < 2 or len(cells) > 20:
        return {}
    n = min(len(folds[c]) for c in cells)
    if n < 2:
        return {}
    names = [f"{a}/{t}" for a, t in cells]
    out = {}
    for m in METRICS:
        scores = np.array([[getattr(folds[c][f], m) for c in cells] for f in range(n)])
        out[m] = nemenyi_test(scores, names)
    return out


def run_experiment(config: ExperimentConfig, write: bool = True) -> BenchmarkReport:
    """Run every grid cell; a failing cell is recorded and the rest continue."""
    started = time.time()
    event_log = load_log(config)
    report = BenchmarkReport(config.log_name, compute_statistics(event_log), config.architectures, config.techniques)
    out = Path(config.out_dir)
    durations = {}
    for technique in config.techniques:
        try:
            prepared = prepare(event_log, technique, config.seed)
        except Exception as exc:  # noqa: BLE001 - cell isolation
            for arch in config.architectures:
                report.failures[(arch, technique)] = f"{type(exc).__name__}: {exc}"
            continue
        for arch in config.architectures:
            t0 = time.time()
            train_cfg = TrainingConfig.for_arch(
                arch, epochs=config.epochs, batch_size=config.batch_size, patience=config.patience
            )
            try:
                res = run_cross_validation(
                    event_log,
                    arch,
                    technique,
                    config.folds,
                    config.seed,
                    train_cfg,
                    run_dir=out / "runs" / f"{arch}_{technique}" if write else None,
                    jobs=config.jobs,
                    prepared=prepared,
                )
                report.folds[(arch, technique)] = res
                log.info("%s/%s accuracy %.4f", arch, technique, aggregate_folds(res).mean["accuracy"])
            except Exception as exc:  # noqa: BLE001 - cell isolation
                report.failures[(arch, technique)] = f"{type(exc).__name__}: {exc}"
                log.error("%s/%s failed: %s", arch, technique, exc)
            durations[f"{arch}/{technique}"] = round(time.time() - t0, 3)
    report.significance = significance_over_cells(report.folds)
    report.metadata = {
        "config": {k: (str(v) if isinstance(v, float) else v) for k, v in asdict(config).items()},
        "config_hash": config.hash(),
        "fold_seeds": {"base": config.seed, "per_fold": "base + fold index"},
        "durations_s": durations,
        "total_s": round(time.time() - started, 3),
        "versions": {"napbench": __version__, "python": platform.python_version(), "numpy": np.__version__},
    }
    if write:
        emit_report(report, out)
    return report


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def stats_row(name: str, s: LogStats) -> list[str]:
    def dist(d):
        return [fmt_summary(d.min), fmt_summary(d.max), f"{d.mean:.2f}", fmt_summary(d.median)]

    distinct = ";".join(str(v) for v in s.distinct_values.values())
    return [
        name, str(s.instances), str(s.variants), f"{s.ratio:.2f}", str(s.activity_classes), str(s.events),
        *dist(s.events_per_instance), *dist(s.activities_per_instance),
        str(s.attributes_total), str(s.attributes_numerical), str(s.attributes_categorical), distinct,
    ]  # fmt: skip


STATS_COLUMNS = (
    "log", "instances", "variants", "ratio", "activity_classes", "events",
    "events_per_instance_min", "events_per_instance_max", "events_per_instance_mean", "events_per_instance_median",
    "activities_per_instance_min", "activities_per_instance_max", "activities_per_instance_mean",
    "activities_per_instance_median", "attributes_total", "attributes_numerical", "attributes_categorical",
    "distinct_values",
)  # fmt: skip


def emit_report(report: BenchmarkReport, directory: str | Path) -> None:
    out = Path(directory)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    cells = [(a, t) for a in report.architectures for t in report.techniques]

    rows = []
    for a, t in cells:
        for r in report.folds.get((a, t), []):
            rows.append([report.log_name, a, t, r.fold, fmt(r.accuracy), fmt(r.f1), fmt(r.auc_pr), r.epochs, fmt(r.val_loss)])
    _write_csv(out / "folds.csv", FOLD_COLUMNS, rows)

    summaries = report.summaries
    header = ["log", "arch", "technique", "n_folds"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")] + ["status"]
    rows = []
    for a, t in cells:
        if (a, t) in summaries:
            ms = summaries[(a, t)]
            vals = [fmt_summary(v) for m in METRICS for v in (ms.mean[m], ms.std[m])]
            rows.append([report.log_name, a, t, ms.n_folds, *vals, "ok"])
        else:
            rows.append([report.log_name, a, t, 0, *[""] * 6, "failed: " + report.failures.get((a, t), "not run")])
    _write_csv(out / "summary.csv", header, rows)

    for m in METRICS:
        prow = []
        for a in report.architectures:
            prow.append([a] + [fmt_summary(summaries[(a, t)].mean[m]) if (a, t) in summaries else "" for t in report.techniques])
        _write_csv(out / "plotdata" / f"{m}.csv", ["architecture", *report.techniques], prow)

    _write_csv(out / "stats.csv", STATS_COLUMNS, [stats_row(report.log_name, report.stats)])

    sig_rows = []
    for m, sr in report.significance.items():
        for i, j in sr.pairs():
            sig_rows.append([
                m, fmt_summary(sr.statistic), fmt_summary(sr.p_value), fmt_summary(sr.critical_difference),
                sr.treatments[i], sr.treatments[j], fmt_summary(sr.mean_ranks[i]), fmt_summary(sr.mean_ranks[j]),
                fmt_summary(sr.rank_diff[i, j]), str(bool(sr.significant[i, j])).lower(),
            ])  # fmt: skip
    _write_csv(
        out / "significance.csv",
        ["metric", "friedman_stat", "friedman_p", "critical_difference", "treatment_a", "treatment_b",
         "mean_rank_a", "mean_rank_b", "rank_diff", "significant"],
        sig_rows,
    )  # fmt: skip

    (out / "summary.md").write_text(summary_markdown(report), encoding="utf-8")
    manifest = dict(report.metadata)
    manifest["failures"] = {f"{a}/{t}": msg for (a, t), msg in report.failures.items()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")


def summary_markdown(report: BenchmarkReport) -> str:
    summaries = report.summaries
    lines = [f"# {report.log_name}", "", "Mean (std) over folds.", ""]
    lines.append("| architecture | technique | accuracy | F1 | AUC_PR |")
    lines.append("|---|---|---|---|---|")
    for a in report.architectures:
        for t in report.techniques:
            if (a, t) in summaries:
                ms = summaries[(a, t)]
                cols = [f"{ms.mean[m]:.4f} ({ms.std[m]:.4f})" for m in METRICS]
            else:
                cols = ["failed"] * 3
            lines.append(f"| {a} | {t} | " + " | ".join(cols) + " |")
    if report.significance:
        lines += ["", "## Friedman / Nemenyi (blocks = folds, alpha = 0.05)", ""]
        for m, sr in report.significance.items():
            n_sig = int(np.triu(sr.significant, 1).sum())
            lines.append(
                f"- {m}: chi2_F = {sr.statistic:.4f}, p = {sr.p_value:.4g}, CD = {sr.critical_difference:.4f}, "
                f"{n_sig} significant pair(s)"
            )
    if report.failures:
        lines += ["", "## Failed cells", ""]
        lines += [f"- {a}/{t}: {msg}" for (a, t), msg in report.failures.items()]
    return "\n".join(lines) + "\n"


def _csv_list(text: str | None) -> tuple[str, ...] | None:
    return None if text is None else tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="napbench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the architecture x technique grid")
    run.add_argument("--config", help="INI experiment file")
    run.add_argument("--log", help="event log CSV (overrides the config)")
    run.add_argument("--arch", help="comma-separated subset of mlp,lstm,cnn")
    run.add_argument("--encoder", help="comma-separated subset of ordinal,binary,onehot,hash,word2vec")
    run.add_argument("--folds", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--epochs", type=int)
    run.add_argument("--batch", type=int)
    run.add_argument("--patience", type=int)
    run.add_argument("--jobs", type=int, help="parallel folds per cell")

    st = sub.add_parser("stats", help="print descriptive statistics of a log")
    st.add_argument("log")
    st.add_argument("--case", default="case_id")
    st.add_argument("--activity", default="activity")
    st.add_argument("--timestamp", default="timestamp")
    st.add_argument("--timestamp-format")
    st.add_argument("--delimiter", default=",")

    sig = sub.add_parser("significance", help="Friedman/Nemenyi on a score CSV (rows = blocks)")
    sig.add_argument("scores")

    gram = sub.add_parser("grammar", help="write the synthetic grammar log as CSV")
    gram.add_argument("out")
    gram.add_argument("--traces", type=int, default=500)
    gram.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "run":
        if args.config:
            config = load_config(args.config)
        elif args.log:
            config = ExperimentConfig(log_path=args.log)
        else:
            print("run needs --config or --log", file=sys.stderr)
            return 2
        config = with_overrides(
            config,
            log_path=args.log,
            log_name=Path(args.log).stem if args.log and not args.config else None,
            architectures=_csv_list(args.arch),
            techniques=_csv_list(args.encoder),
            folds=args.folds,
            seed=args.seed,
            out_dir=args.out,
            epochs=args.epochs,
            batch_size=args.batch,
            patience=args.patience,
            jobs=args.jobs,
        )
        report = run_experiment(config)
        print((Path(config.out_dir) / "summary.md").read_text(encoding="utf-8"))
        return 0 if report.ok else 1

    if args.command == "stats":
        mapping = ColumnMapping(args.case, args.activity, args.timestamp)
        s = compute_statistics(parse_csv(args.log, mapping, args.timestamp_format, args.delimiter))
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        w.writerow(stats_row(Path(args.log).stem, s))
        return 0

    if args.command == "significance":
        names, scores = load_score_matrix(args.scores)
        sr = nemenyi_test(scores, names)
        print(f"friedman chi2 = {sr.statistic:.6g}, p = {sr.p_value:.6g}, CD = {sr.critical_difference:.6g}")
        for name, r in zip(sr.treatments, sr.mean_ranks):
            print(f"  {name}: mean rank {r:.4f}")
        for i, j in sr.pairs():
            flag = "significant" if sr.significant[i, j] else "-"
            print(f"  {sr.treatments[i]} vs {sr.treatments[j]}: diff {sr.rank_diff[i, j]:.4f} {flag}")
        return 0

    if args.command == "grammar":
        from .eventlog import write_csv
        from .synthetic import grammar_log

        write_csv(grammar_log(args.traces, args.seed), args.out)
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
