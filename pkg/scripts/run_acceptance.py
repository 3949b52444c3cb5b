#!/usr/bin/env python3
"""Train and evaluate every MNIST model the acceptance suite reads.

Reports land in ``results/acceptance/<group>/`` (one JSON per run plus its
checkpoint).  Finished runs are skipped, so the script can be restarted.

    python scripts/run_acceptance.py --data-dir /root/data/mnist [--only k256,sweep]

Groups:
  k256    Baseline, VIB, VIM at K=256, beta=1e-3, sigma=1, 60 epochs, with
          representation metrics and the class-0 -> class-1 attack
  k2      VIM and Baseline at K=2, 60 epochs
  sweep   VIM, sigma=1, beta in {1e-4, ..., 1}, 20 epochs
  seeds   all three objectives x seeds {0, 1, 2} on the first 10k training
          images, 20 epochs
"""

import argparse
import logging
import os
import sys
import time

from vimlab.cli import run_train
from vimlab.config import parse_config

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir)
DEFAULT_OUT = os.path.join(ROOT, "results", "acceptance")
VARIANTS = ["baseline", "vib", "vim"]


def cell(variant, beta=1e-3, sigma=1.0, latent=256, epochs=60, seed=0, subsample=None, attack=False):
    return {
        "dataset": {"name": "mnist", "train_subsample": subsample},
        "model": {"latent_dim": latent},
        "train": {"epochs": epochs, "seed": seed, "eval_every": 5},
        "objective": {"variant": variant, "beta": beta, "sigma": sigma},
        "evaluate": {"representation": True, "attack": attack},
    }


def plan():
    groups = {
        "k256": [cell(v, attack=True) for v in ["vim", "baseline", "vib"]],
        "k2": [cell(v, latent=2) for v in ["vim", "baseline"]],
        "sweep": [cell("vim", beta=b, epochs=20) for b in [1e-4, 1e-3, 1e-2, 1e-1, 1.0]],
        "seeds": [cell(v, epochs=20, seed=s, subsample=10000) for s in (0, 1, 2) for v in VARIANTS],
    }
    return groups


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out", default=DEFAULT_OUT)
    p.add_argument("--only", default=None, help="comma-separated group names")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s", stream=sys.stdout)

    groups = plan()
    wanted = args.only.split(",") if args.only else list(groups)
    for group in wanted:
        out = os.path.join(args.out, group)
        for raw in groups[group]:
            cfg = parse_config(raw)
            path = os.path.join(out, cfg.run_name() + ".json")
            if os.path.exists(path):
                print(f"[skip] {group}/{cfg.run_name()}", flush=True)
                continue
            t0 = time.time()
            run_train(cfg, out, args.data_dir)
            print(f"[done] {group}/{cfg.run_name()} in {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
