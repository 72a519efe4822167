"""LSTM + onehot, 10-fold cross-validation on the public helpdesk log.

Pass the CSV path and its column names; expect several hours on one core.
"""

import argparse
import logging

import numpy as np

from napbench.eventlog import ColumnMapping, compute_statistics, parse_csv, preprocess
from napbench.trainer import run_cross_validation


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("log")
    p.add_argument("--case", default="CaseID")
    p.add_argument("--activity", default="ActivityID")
    p.add_argument("--timestamp", default="CompleteTimestamp")
    p.add_argument("--timestamp-format")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="runs/helpdesk_lstm_onehot")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    raw = parse_csv(args.log, ColumnMapping(args.case, args.activity, args.timestamp), args.timestamp_format)
    s = compute_statistics(raw)
    print(f"{s.instances} instances, {s.variants} variants, ratio {s.ratio:.2f}, {s.activity_classes} activities, {s.events} events")
    results = run_cross_validation(preprocess(raw), "lstm", "onehot", k=args.folds, run_dir=args.out, jobs=args.jobs)
    for r in results:
        print(f"fold {r.fold}: accuracy {r.accuracy:.4f} f1 {r.f1:.4f} auc_pr {r.auc_pr:.4f} epochs {r.epochs}")
    print(f"mean accuracy {np.mean([r.accuracy for r in results]):.4f}")


if __name__ == "__main__":
    main()
