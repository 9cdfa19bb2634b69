"""Experiment orchestration: multi-seed runs, ablation suite, reports.

Per-run data derivation: the pool, the labeled/unlabeled split and the
balanced test set each get their own SeedSequence spawned from
(dataset.seed, run_seed), so every training seed sees a fresh draw of the
same distribution, and two configs sharing a run seed see identical data
regardless of any loss/mode toggles (paired comparisons).

Output layout for run_experiment(outdir):
    resolved.ini                     fully explicit config echo
    report.json                      schema-versioned; created_at is the
                                     only field that varies between
                                     identical runs
    runs/seed_<s>/metrics.csv        iteration,l_cls,l_con,l_back,
                                     overall_acc,minority_acc,gmean
    runs/seed_<s>/checkpoint_final.bin / checkpoint_best.bin
    figures/seed_<s>_confusion.svg / seed_<s>_histogram.svg

run_ablation_suite adds one subdirectory per variant plus
suite_report.json and suite_table.csv.
"""

import concurrent.futures
import csv
import dataclasses
import datetime
import json
import os

import numpy as np

from .config import config_hash, resolved_ini
from .data import (
    DataPool,
    generate_gaussian_mixture,
    load_csv_dataset,
    split_labeled_unlabeled,
    write_csv_dataset,
)
from .figures import confusion_svg, histogram_svg, write_svg
from .model import save_checkpoint
from .train import TrainingDiverged, train

SCHEMA_VERSION = 1

METRIC_COLUMNS = ("iteration", "l_cls", "l_con", "l_back",
                  "overall_acc", "minority_acc", "gmean")

AGGREGATE_FIELDS = ("overall_accuracy", "minority_accuracy", "gmean",
                    "histogram_balance")


class ExperimentError(RuntimeError):
    pass


def _data_seeds(dataset_seed, run_seed):
    root = np.random.SeedSequence([dataset_seed, run_seed])
    return root.spawn(3)  # pool, split, test


def build_run_data(cfg, run_seed):
    """-> (split, eval_x, eval_y) for one training seed."""
    d = cfg.dataset
    pool_ss, split_ss, test_ss = _data_seeds(d.seed, run_seed)
    if d.kind == "csv":
        pool = load_csv_dataset(d.csv_path, d.dim, d.n_classes)
        pool, eval_x, eval_y = _carve_test_set(pool, d.test_per_class, test_ss)
    else:
        pool = generate_gaussian_mixture(d.imbalance_profile(), d.dim, d.spread, pool_ss)
        test_profile = dataclasses.replace(
            d.imbalance_profile(), n_largest=d.test_per_class, imbalance_ratio=1.0,
            kind="lt",
        )
        test_pool = generate_gaussian_mixture(test_profile, d.dim, d.spread, test_ss)
        eval_x, eval_y = test_pool.features, test_pool.labels
    split = split_labeled_unlabeled(pool, d.labeled_fraction, split_ss)
    return split, eval_x, eval_y


def _carve_test_set(pool, per_class, seed):
    """For CSV pools: withhold per_class examples of each class as the
    balanced test set; the rest stays in the training pool."""
    rng = np.random.default_rng(seed)
    keep, test = [], []
    for k in range(1, pool.n_classes + 1):
        idx = np.flatnonzero(pool.labels == k)
        if idx.size <= per_class:
            raise ExperimentError(
                f"class {k} has {idx.size} examples; need more than "
                f"test_per_class={per_class} to carve a test set"
            )
        idx = rng.permutation(idx)
        test.append(idx[:per_class])
        keep.append(idx[per_class:])
    keep = np.concatenate(keep)
    test = np.concatenate(test)
    train_pool = DataPool(pool.features[keep], pool.labels[keep], pool.n_classes)
    return train_pool, pool.features[test], pool.labels[test]


def train_one_seed(cfg, seed):
    """Train one seed of the configured experiment -> TrainResult."""
    split, eval_x, eval_y = build_run_data(cfg, seed)
    return train(
        split, eval_x, eval_y,
        cfg.model_config(), cfg.train, cfg.backbone, cfg.balance, cfg.augment,
        seed,
    )


def _run_seed_task(args):
    cfg, seed = args
    try:
        return seed, train_one_seed(cfg, seed), None
    except TrainingDiverged as exc:
        return seed, None, f"seed {seed}: {exc}"


def _aggregate(reports):
    out = {}
    for fieldname in AGGREGATE_FIELDS:
        vals = np.array([getattr(r, fieldname) for r in reports])
        out[fieldname] = {"mean": float(vals.mean()),
                          "std": float(vals.std(ddof=0))}
    return out


def _utcnow():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def run_experiment(cfg, outdir, jobs=1, log=None):
    """Train every seed in cfg.seeds, write artifacts, return the report dict.

    A seed whose training aborts is recorded under "errors" and the other
    seeds still run; the call fails only if no seed succeeds.
    """
    if not cfg.seeds:
        raise ExperimentError("empty seed list; nothing to run")
    outdir = str(outdir)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "resolved.ini"), "w") as fh:
        fh.write(resolved_ini(cfg))

    tasks = [(cfg, s) for s in cfg.seeds]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_seed_task, tasks))
    else:
        outcomes = []
        for task in tasks:
            outcomes.append(_run_seed_task(task))
            if log:
                seed, result, err = outcomes[-1]
                if result is not None:
                    log(f"seed {seed}: overall={result.final_report.overall_accuracy:.4f} "
                        f"minority={result.final_report.minority_accuracy:.4f} "
                        f"gmean={result.final_report.gmean:.4f}")
                else:
                    log(err)

    results = {seed: res for seed, res, _ in outcomes if res is not None}
    errors = {str(seed): err for seed, _, err in outcomes if err is not None}
    if not results:
        raise ExperimentError(f"all seeds failed: {sorted(errors.values())}")

    report = build_report(cfg, results, errors)
    emit_report(cfg, report, results, outdir)
    return report


def build_report(cfg, results, errors=None):
    per_seed = {}
    for seed, res in sorted(results.items()):
        per_seed[str(seed)] = {
            "final": res.final_report.to_dict(),
            "best": res.best_report.to_dict(),
            "best_iteration": res.best_iteration,
            "eval_head": res.eval_head,
            "unlabeled_confusion": res.unlabeled_confusion,
        }
    finals = [res.final_report for _, res in sorted(results.items())]
    bests = [res.best_report for _, res in sorted(results.items())]
    return {
        "schema_version": SCHEMA_VERSION,
        "created_at": _utcnow(),
        "config_hash": config_hash(cfg),
        "seeds": [int(s) for s in cfg.seeds],
        "per_seed": per_seed,
        "aggregate": {"final": _aggregate(finals), "best": _aggregate(bests)},
        "errors": errors or {},
    }


def emit_report(cfg, report, results, outdir):
    """Write report.json, per-seed metrics CSVs, checkpoints and SVGs."""
    if not results:
        raise ExperimentError("emit_report with no successful seeds")
    outdir = str(outdir)
    os.makedirs(os.path.join(outdir, "figures"), exist_ok=True)
    chash = config_hash(cfg)
    for seed, res in sorted(results.items()):
        rundir = os.path.join(outdir, "runs", f"seed_{seed}")
        os.makedirs(rundir, exist_ok=True)
        with open(os.path.join(rundir, "metrics.csv"), "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(METRIC_COLUMNS)
            for row in res.eval_rows:
                wr.writerow([row["iteration"]] +
                            [repr(float(row[c])) for c in METRIC_COLUMNS[1:]])
        save_checkpoint(os.path.join(rundir, "checkpoint_final.bin"),
                        res.model, res.ema, chash)
        save_checkpoint(os.path.join(rundir, "checkpoint_best.bin"),
                        res.best_model, res.best_ema, chash)
        rep = res.final_report
        write_svg(
            os.path.join(outdir, "figures", f"seed_{seed}_confusion.svg"),
            confusion_svg(rep.confusion, title=f"confusion (seed {seed})"),
        )
        write_svg(
            os.path.join(outdir, "figures", f"seed_{seed}_histogram.svg"),
            histogram_svg(rep.prediction_histogram,
                          title=f"prediction histogram (seed {seed})"),
        )
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# ablation suite
# ---------------------------------------------------------------------------

def ablation_variants(cfg):
    """The ten standard rows: the full method plus nine single-change rows.

    The base config's train.mode is forced to end_to_end so that mode
    variants stay comparable.
    """
    base = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, mode="end_to_end"))

    def bal(**kw):
        return dataclasses.replace(base, balance=dataclasses.replace(base.balance, **kw))

    def tr(**kw):
        return dataclasses.replace(base, train=dataclasses.replace(base.train, **kw))

    return [
        ("full", base),
        ("no_annealing", bal(use_annealing=False)),
        ("no_consistency", bal(use_consistency=False)),
        ("no_con_mask", bal(use_con_mask=False)),
        ("no_cls_mask", bal(use_cls_mask=False)),
        ("no_threshold", bal(use_threshold=False)),
        ("hard_pseudo", bal(use_soft_labels=False)),
        ("no_backbone", tr(mode="head_only")),
        ("reweight", bal(reweight_instead_of_mask=True)),
        ("decoupled", tr(mode="decoupled")),
    ]


def run_ablation_suite(cfg, outdir, jobs=1, log=None):
    """Run all ten variants over the same seeds; write one directory each
    plus suite_report.json and suite_table.csv. Returns the suite report."""
    outdir = str(outdir)
    os.makedirs(outdir, exist_ok=True)
    variants = ablation_variants(cfg)
    suite = {
        "schema_version": SCHEMA_VERSION,
        "created_at": _utcnow(),
        "seeds": [int(s) for s in cfg.seeds],
        "variants": {},
        "variant_order": [name for name, _ in variants],
    }
    for name, vcfg in variants:
        if log:
            log(f"[{name}]")
        report = run_experiment(vcfg, os.path.join(outdir, name), jobs=jobs, log=log)
        suite["variants"][name] = {
            "config_hash": report["config_hash"],
            "aggregate": report["aggregate"],
            "errors": report["errors"],
        }
    with open(os.path.join(outdir, "suite_report.json"), "w") as fh:
        json.dump(suite, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(outdir, "suite_table.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["variant"] + [f"{f}_{s}" for f in AGGREGATE_FIELDS
                                   for s in ("mean", "std")])
        for name, _ in variants:
            agg = suite["variants"][name]["aggregate"]["final"]
            wr.writerow([name] + [repr(agg[f][s]) for f in AGGREGATE_FIELDS
                                  for s in ("mean", "std")])
    return suite


def export_dataset(cfg, path):
    """Write the training pool as CSV + manifest.

    Uses the same derivation as training with run seed 0, so the export
    equals the pool seen by a run with seed 0.
    """
    d = cfg.dataset
    if d.kind == "csv":
        raise ExperimentError("gen-data needs a generated dataset config")
    pool_ss, _, _ = _data_seeds(d.seed, 0)
    pool = generate_gaussian_mixture(d.imbalance_profile(), d.dim, d.spread, pool_ss)
    meta = {
        "profile": d.profile,
        "n_classes": d.n_classes,
        "n_largest": d.n_largest,
        "imbalance_ratio": d.imbalance_ratio,
        "spread": d.spread,
        "seed": d.seed,
        "labeled_fraction": d.labeled_fraction,
    }
    write_csv_dataset(pool, path, meta=meta)
    return pool
