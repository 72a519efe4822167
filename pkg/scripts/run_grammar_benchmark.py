"""Full architecture x technique grid on the grammar log.

The defaults (10 folds, up to 100 epochs) take a few hours on one CPU core;
``--folds 3 --epochs 20`` gives a quick look in a few minutes.
"""

import argparse
import logging
from pathlib import Path

from napbench.cli import run_experiment
from napbench.config import ExperimentConfig
from napbench.eventlog import write_csv
from napbench.synthetic import grammar_log


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="runs/grammar")
    p.add_argument("--traces", type=int, default=500)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "grammar.csv"
    write_csv(grammar_log(args.traces, args.seed), log_path)
    cfg = ExperimentConfig(
        str(log_path), folds=args.folds, epochs=args.epochs, seed=args.seed, out_dir=str(out), jobs=args.jobs
    )
    report = run_experiment(cfg)
    print((out / "summary.md").read_text(encoding="utf-8"))
    raise SystemExit(0 if report.ok else 1)


if __name__ == "__main__":
    main()
