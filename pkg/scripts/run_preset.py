"""Run one experiment preset and print a compact accuracy / MSE table.

    python scripts/run_preset.py table1 --trials 10 --jobs 4 --out results/table1.json
"""

import argparse
import os

from jointfac.harness import config as cfgmod
from jointfac.harness.runner import run_experiment, write_results


def _fmt(v, scale=1.0, spec="7.2f"):
    return " " * 7 if v is None else format(scale * v, spec)


def print_table(doc):
    algos = list(dict.fromkeys(r["algorithm"] for r in doc["aggregates"]))
    points = list(dict.fromkeys(r["point"] for r in doc["aggregates"]))
    rows = {(r["point"], r["algorithm"]): r for r in doc["aggregates"]}
    for title, key, scale in (("accuracy [%]", "accuracy_mean", 100.0),
                              ("MSE [dB]", "mse_db_mean", 1.0)):
        print(f"\n{title}")
        print(f"{'point':>14} " + " ".join(f"{a:>10}" for a in algos))
        for p in points:
            cells = (_fmt(rows[(p, a)][key], scale).rjust(10) for a in algos)
            print(f"{p:>14} " + " ".join(cells))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("preset", choices=cfgmod.EXPERIMENTS[:-1])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", help="also write the full JSON document here")
    args = ap.parse_args()
    cfg = cfgmod.preset(args.preset, trials=args.trials, seed=args.seed)
    doc = run_experiment(cfg, jobs=args.jobs)
    print_table(doc)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        write_results(doc, args.out)


if __name__ == "__main__":
    main()
