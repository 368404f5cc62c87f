"""Command-line entry point: ``jointfac gen | run | score``.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 failure while
running (including I/O errors).
"""

from __future__ import annotations

import argparse
import json
import sys

from ..metrics import clustering_accuracy, matched_mse, to_db
from ..synthgen import MODELS, SynthParams, generate
from . import config as cfgmod
from .algorithms import instance_rng
from .fileio import read_labels, read_matrix, write_ground_truth
from .runner import run_experiment, to_csv, to_json

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, help="experiment seed (default: config or 0)")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per sweep point")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--out", help="output file (run) or directory (gen)")
    return p


def build_parser():
    common = _common()
    ap = _Parser(prog="jointfac", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic instance to disk")
    g.add_argument("--model", choices=MODELS, default="nmf")
    g.add_argument("--trial", type=int, default=0, help="trial index for the seed stream")
    for dim in ("I", "J", "F", "K", "L"):
        g.add_argument(f"--{dim}", type=int)
    g.add_argument("--snr1", type=float, dest="snr1_db")
    g.add_argument("--snr2", type=float, dest="snr2_db")
    g.add_argument("--outliers", type=float, dest="outlier_fraction")
    g.add_argument("--slabs", type=int, dest="outlier_slabs")
    g.add_argument("--ranks", type=int, nargs="+")

    r = sub.add_parser("run", parents=[common], help="run an experiment")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML experiment file")
    src.add_argument("--preset", choices=cfgmod.EXPERIMENTS[:-1])
    r.add_argument("--format", choices=cfgmod.FORMATS)
    r.add_argument("--print-config", action="store_true",
                   help="print the resolved config and exit")

    s = sub.add_parser("score", parents=[common], help="score labels and factors")
    s.add_argument("--true-labels", required=True)
    s.add_argument("--pred-labels", required=True)
    s.add_argument("--true-factor")
    s.add_argument("--est-factor")
    return ap


def _cmd_gen(args):
    fields = {k: getattr(args, k) for k in ("I", "J", "F", "K", "L", "snr1_db", "snr2_db",
                                            "outlier_fraction", "outlier_slabs", "ranks")}
    fields = {k: v for k, v in fields.items() if v is not None}
    if args.model == "tensor":
        fields.setdefault("L", 30)
    seed = args.seed or 0
    try:
        params = SynthParams(model=args.model, seed=seed, **fields)
    except (TypeError, ValueError) as exc:
        print(f"invalid instance parameters: {exc}", file=sys.stderr)
        return EXIT_INVALID
    gt = generate(params, rng=instance_rng(seed, args.trial))
    out = args.out or "instance"
    write_ground_truth(out, gt)
    print(out)
    return EXIT_OK


def _cmd_run(args):
    try:
        if args.config:
            cfg = cfgmod.load(args.config)
        else:
            cfg = cfgmod.preset(args.preset)
        for attr, val in (("seed", args.seed), ("trials", args.trials),
                          ("parallelism", args.jobs), ("output_path", args.out),
                          ("output_format", args.format)):
            if val is not None:
                setattr(cfg, attr, val)
        cfgmod.validate(cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.print_config:
        sys.stdout.write(cfg.to_yaml())
        return EXIT_OK
    doc = run_experiment(cfg)
    text = to_json(doc) if cfg.output_format == "json" else to_csv(doc)
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_score(args):
    t = read_labels(args.true_labels)
    p = read_labels(args.pred_labels)
    if t.shape != p.shape:
        print(f"label files differ in length: {t.size} vs {p.size}", file=sys.stderr)
        return EXIT_INVALID
    out = {"accuracy": clustering_accuracy(t, p)}
    if args.true_factor or args.est_factor:
        if not (args.true_factor and args.est_factor):
            print("--true-factor and --est-factor go together", file=sys.stderr)
            return EXIT_INVALID
        mse = matched_mse(read_matrix(args.true_factor), read_matrix(args.est_factor))
        out.update(mse_linear=mse, mse_db=to_db(mse))
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return {"gen": _cmd_gen, "run": _cmd_run, "score": _cmd_score}[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
