#!/usr/bin/env python3
"""Compare all six coverage criteria on the toy fixture.

Runs one guided fuzz per criterion with a shared budget and prints
initial/final coverage, failed-test counts, and pool growth.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from neuronfuzz.coverage import CRITERIA, CriterionConfig, load_profile
from neuronfuzz.fuzzer import Fuzzer, FuzzConfig
from neuronfuzz.model import load_model
from neuronfuzz.netpbm import load_corpus
from neuronfuzz.scheduler import ScheduleConfig

REPO = Path(__file__).resolve().parent.parent


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--budget-iters", type=int, default=1000)
    parser.add_argument("--rng-seed", type=int, default=7)
    parser.add_argument("--trials-per-batch", type=int, default=16)
    args = parser.parse_args()

    model = load_model(REPO / "fixtures" / "lenet_toy")
    profile = load_profile(REPO / "fixtures" / "lenet_toy" / "profile.bin")
    images, labels, _ = load_corpus(REPO / "fixtures" / "corpus")

    print(f"{'criterion':<10} {'initial':>8} {'final':>8} {'failed':>7} {'pool':>6} {'secs':>6}")
    for kind in CRITERIA:
        cfg = FuzzConfig(
            criterion=CriterionConfig(kind=kind),
            schedule=ScheduleConfig(trials_per_batch=args.trials_per_batch),
            budget_iters=args.budget_iters,
            rng_seed=args.rng_seed,
        )
        fuzzer = Fuzzer(model, profile, cfg)
        fuzzer.seed_pool(images, labels)
        started = time.monotonic()
        report = fuzzer.run()
        elapsed = time.monotonic() - started
        print(
            f"{kind:<10} {report.initial_coverage:>8.4f} {report.final_coverage:>8.4f} "
            f"{report.failed_tests:>7d} {report.pool_batches:>6d} {elapsed:>6.1f}"
        )


if __name__ == "__main__":
    main()
