"""Command-line surface: profile, fuzz, quantdiff, eval, report.

Exit codes: 0 success, 2 usage/input error, 1 internal error. All
randomness flows from --rng-seed, so every command is deterministic
given its flags.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from neuronfuzz.coverage import (
    CRITERIA,
    PROFILE_CRITERIA,
    CriterionConfig,
    load_profile,
    profile_dataset,
    save_profile,
)
from neuronfuzz.fuzzer import Fuzzer, FuzzConfig, quant_diff_run, write_run_dir
from neuronfuzz.model import load_model, predict_labels
from neuronfuzz.mutation import MutationConfig
from neuronfuzz.netpbm import load_corpus
from neuronfuzz.scheduler import ScheduleConfig


def cmd_profile(args) -> int:
    model = load_model(args.model)
    images, _, _ = load_corpus(args.data)
    profile = profile_dataset(model, images)
    save_profile(profile, args.out)
    print(f"neurons: {model.neuron_count}")
    for i, start, stop in model.neuron_layout:
        kind = model.layers[i].kind
        lo = profile.low[start:stop].min()
        hi = profile.high[start:stop].max()
        print(f"layer {i} ({kind}): {stop - start} neurons, range [{lo:.6f}, {hi:.6f}]")
    print(f"profile written: {args.out}")
    return 0


_TUPLE_FIELDS = {
    "scaling_range",
    "shear_range",
    "rotation_range",
    "contrast_range",
    "brightness_range",
    "blur_sigma_range",
    "noise_sigma_range",
}


def _resolve_fuzz_config(args) -> FuzzConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
    criterion = dict(data.get("criterion", {}))
    if args.criterion:
        criterion["kind"] = args.criterion
    mutation = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in dict(data.get("mutation", {})).items()
    }
    schedule = dict(data.get("schedule", {}))
    top = {
        k: data[k]
        for k in ("budget_iters", "budget_seconds", "rng_seed", "batch_size", "guided")
        if k in data
    }
    if args.budget_iters is not None:
        top["budget_iters"] = args.budget_iters
    if args.budget_seconds is not None:
        top["budget_seconds"] = args.budget_seconds
        if args.budget_iters is None and "budget_iters" not in data:
            top["budget_iters"] = None
    if args.rng_seed is not None:
        top["rng_seed"] = args.rng_seed
    if args.batch_size is not None:
        top["batch_size"] = args.batch_size
    if args.unguided:
        top["guided"] = False
    return FuzzConfig(
        criterion=CriterionConfig(**criterion),
        mutation=MutationConfig(**mutation),
        schedule=ScheduleConfig(**schedule),
        **top,
    )


def cmd_fuzz(args) -> int:
    cfg = _resolve_fuzz_config(args)
    if cfg.criterion.kind in PROFILE_CRITERIA and not args.profile:
        raise ValueError(f"criterion {cfg.criterion.kind} requires --profile")
    model = load_model(args.model)
    profile = load_profile(args.profile) if args.profile else None
    if profile is not None and len(profile) != model.neuron_count:
        raise ValueError(
            f"profile has {len(profile)} neurons, model has {model.neuron_count}"
        )
    images, labels, _ = load_corpus(args.seeds)
    fuzzer = Fuzzer(model, profile, cfg)
    fuzzer.seed_pool(images, labels)
    report = fuzzer.run()
    write_run_dir(
        args.out, report, fuzzer.failed, pool=fuzzer.pool if args.snapshot_pool else None
    )
    print(
        f"criterion {report.criterion}: coverage "
        f"{report.initial_coverage:.6f} -> {report.final_coverage:.6f}"
    )
    print(f"failed tests: {report.failed_tests}")
    print(f"pool batches: {report.pool_batches}")
    print(f"run dir: {args.out}")
    return 0


def cmd_quantdiff(args) -> int:
    if not 0.0 <= args.ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {args.ratio}")
    if args.repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {args.repeats}")
    model = load_model(args.model)
    images, _, names = load_corpus(args.tests)
    counts = []
    disagreements = {}
    for i in range(args.repeats):
        seed = args.rng_seed + i
        records = quant_diff_run(model, args.ratio, seed, images)
        counts.append(len(records))
        disagreements[str(seed)] = [
            {"input": idx, "file": names[idx], "label_full": a, "label_quant": b}
            for idx, a, b in records
        ]
    mean = sum(counts) / len(counts)
    result = {
        "ratio": args.ratio,
        "rng_seed": args.rng_seed,
        "repeats": args.repeats,
        "counts": counts,
        "mean_count": mean,
        "disagreements": disagreements,
    }
    Path(args.out).write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    print(f"ratio {args.ratio}: counts {counts}, mean {mean:.2f}")
    print(f"report written: {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    images, labels, _ = load_corpus(args.tests)
    predictions = predict_labels(model, images)
    correct = sum(1 for p, l in zip(predictions, labels) if p == l)
    print(f"accuracy {correct / len(labels):.4f} ({correct}/{len(labels)})")
    return 0


def _read_report_lines(path: Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                rec = {
                    "iteration": int(rec["iteration"]),
                    "coverage": rec["coverage"],
                    "failed": int(rec["failed"]),
                    "gained": bool(rec["gained"]),
                }
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed record at line {n}: {exc}") from None
            records.append(rec)
    return records


def cmd_report(args) -> int:
    run = Path(args.run)
    summary_path = run / "summary.json"
    report_path = run / "report.jsonl"
    if not summary_path.exists() or not report_path.exists():
        raise ValueError(f"{run}: not a run directory (missing summary.json/report.jsonl)")
    summary = json.loads(summary_path.read_text())
    records = _read_report_lines(report_path)
    rows = [(0, summary["initial_coverage"])]
    rows += [(rec["iteration"], rec["coverage"]) for rec in records]
    print("iteration\tcoverage")
    for it, cov in rows:
        print(f"{it}\t{cov}")
    failed_total = sum(rec["failed"] for rec in records)
    gains = sum(1 for rec in records if rec["gained"])
    print(f"criterion: {summary['criterion']}")
    print(f"iterations: {len(records)}")
    print(f"gain iterations: {gains}")
    print(f"failed tests: {failed_total}")
    print(f"final coverage: {rows[-1][1]}")
    if args.plot_data:
        with open(args.plot_data, "w") as fh:
            for it, cov in rows:
                fh.write(f"{it}\t{cov}\n")
        print(f"plot data written: {args.plot_data}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuronfuzz",
        description="Coverage-guided fuzzing for small image-classifier networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="profile per-neuron activation ranges over a dataset")
    p.add_argument("--model", required=True, help="model directory or model.json path")
    p.add_argument("--data", required=True, help="corpus directory (netpbm + labels.csv)")
    p.add_argument("--out", required=True, help="output profile file")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("fuzz", help="run the coverage-guided fuzz loop")
    p.add_argument("--model", required=True)
    p.add_argument("--seeds", required=True, help="seed corpus directory")
    p.add_argument("--criterion", choices=CRITERIA, default=None)
    p.add_argument("--profile", help="profile file (required for kmnc/nbc/snac)")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--budget-iters", type=int, default=None)
    p.add_argument("--budget-seconds", type=float, default=None)
    p.add_argument("--rng-seed", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--snapshot-pool", action="store_true", help="write pool/ snapshots")
    p.add_argument(
        "--unguided", action="store_true", help="disable the coverage-gain retention check"
    )
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("quantdiff", help="differential test against a 16-bit-truncated model")
    p.add_argument("--model", required=True)
    p.add_argument("--tests", required=True, help="test corpus directory")
    p.add_argument("--ratio", type=float, required=True, help="fraction of weights to truncate")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1, help="seeded sampling repetitions")
    p.add_argument("--out", required=True, help="output JSON report")
    p.set_defaults(func=cmd_quantdiff)

    p = sub.add_parser("eval", help="prediction accuracy of a model over a test corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--tests", required=True, help="corpus directory (labels.csv or meta.jsonl)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render a run directory's coverage table and totals")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--plot-data", help="write iteration/coverage columns to this file")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
