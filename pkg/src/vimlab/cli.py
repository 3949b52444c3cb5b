"""Command-line entry point: ``vimlab {train,sweep,eval,plotdata}``."""

from __future__ import annotations

import argparse
import copy
import csv
import glob
import itertools
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import data as D
from .adversarial import robustness_report
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config, parse_config
from .errors import CheckpointError, ConfigError, FormatError, NumericalAbort
from .metrics import representation_report, test_error
from .model import StochasticClassifier
from .optim import init_seed, train

log = logging.getLogger("vimlab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_CHECKPOINT = 5

SUMMARY_COLUMNS = [
    "objective", "beta", "sigma", "seed", "test_error", "adjR", "hoyer",
    # appended columns; never reorder the ones above
    "standard_ari", "status", "report",
]


def dump_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def load_datasets(cfg, data_dir=None):
    ds = cfg.dataset
    if ds.name == "blobs":
        train_set, test_set = D.blobs_split(
            ds.classes, ds.per_class, ds.test_per_class, ds.separation, ds.dim, ds.seed
        )
    else:
        root = D.resolve_data_dir(data_dir or ds.data_dir)
        train_set, test_set = D.load_mnist("train", root), D.load_mnist("test", root)
    if ds.train_subsample:
        train_set = train_set.head(ds.train_subsample)
    return train_set, test_set


def build_model(cfg, input_dim, n_classes):
    return StochasticClassifier(
        input_dim=input_dim,
        hidden=cfg.model.hidden,
        latent_dim=cfg.model.latent_dim,
        n_classes=n_classes,
        seed=init_seed(cfg.train.seed),
    )


def _echo(cfg, data_dir):
    echo = cfg.to_dict()
    echo.pop("out_dir", None)
    echo.pop("sweep", None)
    if cfg.dataset.name == "mnist":
        echo["dataset"]["data_dir"] = os.path.abspath(D.resolve_data_dir(data_dir or cfg.dataset.data_dir))
    return echo


def evaluate_extras(model, cfg, test_set, report, samples=0):
    ev = cfg.evaluate
    if samples:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.train.seed, spawn_key=(7,)))
        report["sampled_test_error"] = test_error(model, test_set, samples=samples, rng=rng)
        report["samples"] = samples
    if ev.representation:
        report["representation"] = representation_report(
            model, test_set, seed=ev.kmeans_seed, n_init=ev.kmeans_restarts,
            error=report.get("final_test_error"),
        ).to_dict()
    if ev.attack:
        a = ev.attack_config
        rob, _ = robustness_report(model, test_set, cfg.attack_config(), a.source_class, a.target_class, a.count)
        report["robustness"] = rob
    return report


def run_train(cfg, out_dir, data_dir=None, samples=None, quiet=False):
    """Train one configuration; writes report, checkpoint and timing files."""
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    train_set, test_set = load_datasets(cfg, data_dir)
    n_classes = max(train_set.n_classes, test_set.n_classes)
    model = build_model(cfg, train_set.images.shape[1], n_classes)
    name = cfg.run_name()

    def progress(rec):
        log.info("%s epoch %d loss %.5f test_error %s", name, rec.epoch, rec.train_loss, rec.test_error)

    result = train(model, train_set, test_set, cfg.train_config(), progress=progress)
    report = result.to_dict()
    report["config"] = _echo(cfg, data_dir)
    report["data"] = {"train": train_set.provenance, "test": test_set.provenance,
                      "n_train": len(train_set), "n_test": len(test_set)}
    samples = cfg.evaluate.samples if samples is None else samples
    evaluate_extras(model, cfg, test_set, report, samples)

    ckpt = f"{name}.ckpt"
    save_checkpoint(os.path.join(out_dir, ckpt), model, config=report["config"],
                    objective=cfg.objective_spec().to_dict(), seed=cfg.train.seed)
    report["checkpoint"] = ckpt
    path = os.path.join(out_dir, f"{name}.json")
    dump_json(report, path)
    dump_json({"wall_clock_seconds": time.perf_counter() - start}, os.path.join(out_dir, f"{name}.timing.json"))
    if not quiet:
        rep = report.get("representation") or {}
        print(f"{name}: test_error={report['final_test_error']:.2f}% "
              f"adjR={rep.get('adjR', float('nan')):.3f} hoyer={rep.get('hoyer_mean', float('nan')):.3f} -> {path}")
    return report, path


def sweep_cells(cfg):
    sw = cfg.sweep
    objectives = sw.objectives or [cfg.objective.variant]
    if not (objectives and sw.betas and sw.sigmas and sw.seeds):
        raise ConfigError("sweep grids must be nonempty", keys=["sweep"])
    cells = []
    for variant, beta, sigma, seed in itertools.product(objectives, sw.betas, sw.sigmas, sw.seeds):
        cell = copy.deepcopy(cfg)
        cell.objective.variant = variant
        cell.objective.beta = float(beta)
        cell.objective.sigma = float(sigma)
        cell.train.seed = int(seed)
        cell.name = None
        cells.append(parse_config(cell.to_dict()))
    return cells


def _run_cell(args):
    cell, out_dir, data_dir, samples = args
    row = {"objective": cell.objective.variant, "beta": cell.objective.beta,
           "sigma": cell.objective.sigma, "seed": cell.train.seed}
    try:
        report, path = run_train(cell, out_dir, data_dir, samples, quiet=True)
    except Exception as exc:  # recorded per cell; the sweep goes on
        row.update(status=f"failed: {type(exc).__name__}: {exc}", report="")
        return row
    rep = report.get("representation") or {}
    row.update(
        test_error=report["final_test_error"], adjR=rep.get("adjR"), hoyer=rep.get("hoyer_mean"),
        standard_ari=rep.get("standard_ari"), status="ok", report=os.path.basename(path),
    )
    return row


def run_sweep(cfg, out_dir, data_dir=None, jobs=None, samples=None):
    cells = sweep_cells(cfg)
    os.makedirs(out_dir, exist_ok=True)
    jobs = jobs or os.cpu_count() or 1
    work = [(c, out_dir, data_dir, samples) for c in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            rows = list(pool.map(_run_cell, work))
    else:
        rows = [_run_cell(w) for w in work]
    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in SUMMARY_COLUMNS})
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"sweep: {len(rows)} cells, {failed} failed -> {summary}")
    return rows, summary


def run_eval(checkpoint, which, data_dir=None, samples=0, cfg_override=None):
    model, header = load_checkpoint(checkpoint)
    cfg = cfg_override or parse_config(header["meta"].get("config", {}))
    _, test_set = load_datasets(cfg, data_dir)
    if test_set.images.shape[1] != model.input_dim:
        raise CheckpointError(
            f"checkpoint expects inputs of width {model.input_dim}, data has {test_set.images.shape[1]}"
        )
    fragment = {"checkpoint": os.path.basename(checkpoint), "which": which}
    if which == "error":
        fragment["test_error"] = test_error(model, test_set)
        if samples:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.train.seed, spawn_key=(7,)))
            fragment["sampled_test_error"] = test_error(model, test_set, samples=samples, rng=rng)
    elif which == "repr":
        ev = cfg.evaluate
        fragment["representation"] = representation_report(
            model, test_set, seed=ev.kmeans_seed, n_init=ev.kmeans_restarts
        ).to_dict()
    elif which == "attack":
        a = cfg.evaluate.attack_config
        fragment["robustness"], _ = robustness_report(
            model, test_set, cfg.attack_config(), a.source_class, a.target_class, a.count
        )
    else:
        raise ConfigError(f"unknown evaluator {which!r}", keys=["which"])
    return fragment


def _fmt(x):
    return repr(float(x))


def run_plotdata(reports_dir, out_dir=None):
    """Write one TSV series per (objective, sigma): x = log10(beta)."""
    paths = sorted(p for p in glob.glob(os.path.join(reports_dir, "*.json")) if not p.endswith(".timing.json"))
    reports = []
    for p in paths:
        with open(p) as f:
            r = json.load(f)
        if isinstance(r, dict) and "config" in r and "final_test_error" in r:
            reports.append(r)
    if not reports:
        raise FileNotFoundError(f"no reports found in {reports_dir}")
    out_dir = out_dir or reports_dir
    os.makedirs(out_dir, exist_ok=True)
    curves = {}
    for r in reports:
        obj = r["config"]["objective"]
        curves.setdefault((obj["variant"], float(obj["sigma"])), []).append(r)
    written = []
    for (variant, sigma), rs in sorted(curves.items()):
        rs.sort(key=lambda r: (r["config"]["objective"]["beta"], r["seed"]))
        path = os.path.join(out_dir, f"series_{variant}_sigma{sigma:g}.tsv")
        with open(path, "w") as f:
            f.write("log10_beta\tbeta\tseed\ttest_error\tadjR\thoyer\n")
            for r in rs:
                beta = float(r["config"]["objective"]["beta"])
                rep = r.get("representation") or {}
                x = math.log10(beta) if beta > 0 else float("-inf")
                cells = [_fmt(x), _fmt(beta), str(r["seed"]), _fmt(r["final_test_error"]),
                         _fmt(rep["adjR"]) if rep else "", _fmt(rep["hoyer_mean"]) if rep else ""]
                f.write("\t".join(cells) + "\n")
        written.append(path)
    return written


def _parser():
    p = argparse.ArgumentParser(prog="vimlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="run configuration (JSON)")
        sp.add_argument("--data-dir", help=f"MNIST IDX directory (default ${D.DATA_DIR_ENV})")
        sp.add_argument("--out", help="output directory (default: config out_dir)")
        sp.add_argument("--seed", type=int, help="override train.seed")
        sp.add_argument("--samples", type=int, help="latent samples for test-time averaging")

    common(sub.add_parser("train", help="train one configuration"))
    sp = sub.add_parser("sweep", help="beta x sigma x seed grid")
    common(sp)
    sp.add_argument("--jobs", type=int, help="parallel cells (default: all cores)")
    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp, config_required=False)
    sp.add_argument("checkpoint")
    sp.add_argument("--which", choices=["error", "repr", "attack"], default="error")
    sp = sub.add_parser("plotdata", help="series files from a directory of reports")
    sp.add_argument("reports_dir")
    sp.add_argument("--out", help="where to write series (default: reports_dir)")
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.train.seed = args.seed
        cfg.sweep.seeds = [args.seed]
    return cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "train":
            cfg = _load(args)
            run_train(cfg, args.out or cfg.out_dir, args.data_dir, args.samples)
        elif args.command == "sweep":
            cfg = _load(args)
            run_sweep(cfg, args.out or cfg.out_dir, args.data_dir, args.jobs, args.samples)
        elif args.command == "eval":
            cfg = _load(args) if args.config else None
            fragment = run_eval(args.checkpoint, args.which, args.data_dir, args.samples or 0, cfg)
            text = json.dumps(fragment, indent=2, sort_keys=True)
            print(text)
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                stem = os.path.splitext(os.path.basename(args.checkpoint))[0]
                dump_json(fragment, os.path.join(args.out, f"{stem}.eval-{args.which}.json"))
        elif args.command == "plotdata":
            for path in run_plotdata(args.reports_dir, args.out):
                print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
