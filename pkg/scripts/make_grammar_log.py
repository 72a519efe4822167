"""Write the synthetic grammar log (A B C (B C)^r D with a loops attribute) as CSV."""

import argparse

from napbench.eventlog import write_csv
from napbench.synthetic import grammar_log


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", nargs="?", default="data/grammar.csv")
    p.add_argument("--traces", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    write_csv(grammar_log(args.traces, args.seed), args.out)
    print(f"wrote {args.traces} traces to {args.out}")


if __name__ == "__main__":
    main()
