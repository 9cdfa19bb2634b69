"""Command-line front end.

    skewlab run <config.ini>     train every seed, write reports
    skewlab ablate <config.ini>  run the ten-variant ablation suite
    skewlab gen-data <config.ini>  export the generated pool as CSV
    skewlab report <dir>         print the summary table of a finished run

Output directory resolution: --out flag, else [run] output_dir in the
config, else $SKEWLAB_OUT (default ./skewlab_runs) plus the config stem.
"""

import argparse
import json
import os
import sys

from .config import ConfigError, parse_config, resolve_output_dir
from .data import DataError
from .experiment import (
    ExperimentError,
    export_dataset,
    run_ablation_suite,
    run_experiment,
)


def _add_common(p):
    p.add_argument("config", help="INI experiment config")
    p.add_argument("--seed", type=int, default=None,
                   help="run only this seed (overrides [run] seeds)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel seed workers (default 1)")


def build_parser():
    p = argparse.ArgumentParser(prog="skewlab",
                                description="class-imbalanced SSL laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("run", help="train one experiment"))
    _add_common(sub.add_parser("ablate", help="run the ablation suite"))

    g = sub.add_parser("gen-data", help="export the generated dataset as CSV")
    g.add_argument("config")
    g.add_argument("--out", default=None,
                   help="CSV path (default <outdir>/dataset.csv)")

    r = sub.add_parser("report", help="print a finished run's summary")
    r.add_argument("dir")
    return p


def _load(args, default_name):
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    stem = os.path.splitext(os.path.basename(args.config))[0] or default_name
    outdir = resolve_output_dir(cfg, cli_out=args.out, default_name=stem)
    return cfg, outdir


def _print_aggregate(agg, label):
    print(f"{label}:")
    for name, stats in agg.items():
        print(f"  {name:20s} {stats['mean']:.4f} +/- {stats['std']:.4f}")


def cmd_run(args):
    cfg, outdir = _load(args, "run")
    report = run_experiment(cfg, outdir, jobs=args.jobs, log=print)
    print(f"wrote {outdir}")
    _print_aggregate(report["aggregate"]["final"], "final (mean over seeds)")
    if report["errors"]:
        for msg in report["errors"].values():
            print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


def cmd_ablate(args):
    cfg, outdir = _load(args, "ablate")
    suite = run_ablation_suite(cfg, outdir, jobs=args.jobs, log=print)
    print(f"wrote {outdir}")
    failed = False
    for name in suite["variant_order"]:
        agg = suite["variants"][name]["aggregate"]["final"]
        print(f"{name:16s} overall={agg['overall_accuracy']['mean']:.4f} "
              f"minority={agg['minority_accuracy']['mean']:.4f} "
              f"gmean={agg['gmean']['mean']:.4f}")
        if suite["variants"][name]["errors"]:
            failed = True
    return 1 if failed else 0


def cmd_gen_data(args):
    cfg = parse_config(args.config)
    if args.out:
        path = args.out
    else:
        stem = os.path.splitext(os.path.basename(args.config))[0]
        outdir = resolve_output_dir(cfg, cli_out=None, default_name=stem)
        os.makedirs(outdir, exist_ok=True)
        path = os.path.join(outdir, "dataset.csv")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    pool = export_dataset(cfg, path)
    print(f"wrote {path} ({pool.labels.size} rows) and {path}.manifest.json")
    return 0


def cmd_report(args):
    suite_path = os.path.join(args.dir, "suite_report.json")
    run_path = os.path.join(args.dir, "report.json")
    if os.path.exists(suite_path):
        with open(suite_path) as fh:
            suite = json.load(fh)
        print(f"ablation suite over seeds {suite['seeds']}")
        for name in suite["variant_order"]:
            agg = suite["variants"][name]["aggregate"]["final"]
            print(f"{name:16s} overall={agg['overall_accuracy']['mean']:.4f} "
                  f"minority={agg['minority_accuracy']['mean']:.4f} "
                  f"gmean={agg['gmean']['mean']:.4f}")
        return 0
    if os.path.exists(run_path):
        with open(run_path) as fh:
            report = json.load(fh)
        print(f"seeds {report['seeds']}  config {report['config_hash']}")
        for seed, entry in sorted(report["per_seed"].items(), key=lambda kv: int(kv[0])):
            fin = entry["final"]
            print(f"seed {seed}: overall={fin['overall_accuracy']:.4f} "
                  f"minority={fin['minority_accuracy']:.4f} gmean={fin['gmean']:.4f} "
                  f"[{entry['eval_head']}]")
        _print_aggregate(report["aggregate"]["final"], "final (mean over seeds)")
        if report["errors"]:
            for msg in report["errors"].values():
                print(f"error: {msg}", file=sys.stderr)
            return 1
        return 0
    print(f"error: no report.json or suite_report.json under {args.dir}",
          file=sys.stderr)
    return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "ablate": cmd_ablate,
        "gen-data": cmd_gen_data,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, DataError, ExperimentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
