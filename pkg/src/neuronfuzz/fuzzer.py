"""The coverage-guided fuzz loop and its run-directory persistence.

One iteration: select a batch from the pool, sample seeds, split the
trial budget by mutation potential, mutate, evaluate every changed
mutant in one prediction pass, divert label-flipping mutants to the
failed-test list (they are never re-enqueued), and keep the surviving
mutants as a new pool batch iff they cover something new.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from neuronfuzz import netpbm
from neuronfuzz.coverage import (
    CoverageState,
    CriterionConfig,
    NeuronProfile,
    batch_coverage_items,
    coverage_ratio,
)
from neuronfuzz.model import Model, forward_with_trace, predict_labels, quantize_model
from neuronfuzz.mutation import MutationConfig, Seed, mutate
from neuronfuzz.scheduler import (
    Batch,
    PoolEntry,
    ScheduleConfig,
    power_schedule,
    sample_seeds,
    select_next,
)


@dataclass
class FuzzConfig:
    criterion: CriterionConfig = field(default_factory=CriterionConfig)
    mutation: MutationConfig = field(default_factory=MutationConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    budget_iters: int | None = 1000
    budget_seconds: float | None = None
    rng_seed: int = 0
    batch_size: int = 32
    guided: bool = True  # False: keep every changed batch, ignoring coverage gain

    def __post_init__(self):
        if self.budget_iters is None and self.budget_seconds is None:
            raise ValueError("either budget_iters or budget_seconds must be set")
        if self.budget_iters is not None and self.budget_iters < 0:
            raise ValueError(f"budget_iters must be >= 0, got {self.budget_iters}")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ValueError(f"budget_seconds must be positive, got {self.budget_seconds}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class FailedTest:
    """A constraint-valid mutant whose prediction differs from its seed label."""

    image: np.ndarray
    label: int
    predicted: int
    transform_log: tuple
    batch_id: int
    iteration: int
    reference: np.ndarray
    original: np.ndarray


@dataclass
class IterationRecord:
    iteration: int
    batch_id: int
    mutants: int
    failed: int
    gained: bool
    coverage: float


@dataclass
class FuzzReport:
    criterion: str
    rng_seed: int
    initial_coverage: float
    iterations: list[IterationRecord]
    failed_tests: int
    pool_batches: int
    final_coverage: float
    config: dict


def preprocess_seeds(
    model: Model, images: list[np.ndarray], labels: list[int], batch_size: int
) -> list[Batch]:
    """Filter to correctly classified images and group them into batches."""
    if not images:
        raise ValueError("empty corpus")
    predictions = predict_labels(model, images)
    kept = [
        Seed.from_image(img, label)
        for img, label, pred in zip(images, labels, predictions)
        if pred == label
    ]
    if not kept:
        raise ValueError("no correctly classified seeds in corpus")
    return [
        Batch(kept[i : i + batch_size], id=i // batch_size)
        for i in range(0, len(kept), batch_size)
    ]


def is_failed_test(model: Model, mutant: Seed) -> bool:
    """True iff the model's argmax prediction differs from the seed label."""
    return predict_labels(model, [mutant.image])[0] != mutant.label


class Fuzzer:
    """Stateful fuzz session owning the pool, coverage state, and results.

    Single logical thread: all RNG draws come from one seeded stream, so
    a run is fully reproducible from its config.
    """

    def __init__(
        self,
        model: Model,
        profile: NeuronProfile | None,
        cfg: FuzzConfig,
        keep_item_log: bool = False,
    ):
        self.model = model
        self.profile = profile
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.state = CoverageState(cfg.criterion.kind)
        self.pool: list[PoolEntry] = []
        self.failed: list[FailedTest] = []
        self.records: list[IterationRecord] = []
        self.item_log: list[set] | None = [] if keep_item_log else None
        self.initial_coverage = 0.0
        self._next_batch_id = 0

    def seed_pool(self, images: list[np.ndarray], labels: list[int]) -> None:
        batches = preprocess_seeds(self.model, images, labels, self.cfg.batch_size)
        self.pool = [PoolEntry(b) for b in batches]
        self._next_batch_id = len(batches)
        seeds = [s for b in batches for s in b.seeds]
        traces = forward_with_trace(self.model, [s.image for s in seeds])
        items = batch_coverage_items(traces, self.profile, self.cfg.criterion)
        self.state.update(items)
        if self.item_log is not None:
            self.item_log.append(items)
        self.initial_coverage = self.coverage()

    def coverage(self) -> float:
        return coverage_ratio(self.state, self.model, self.cfg.criterion)

    def step(self, iteration: int) -> IterationRecord:
        entry = select_next(self.pool, self.cfg.schedule, self.rng)
        sampled = sample_seeds(entry.batch, self.cfg.schedule, self.rng)
        allocation = power_schedule(
            sampled, self.cfg.schedule.trials_per_batch, self.cfg.mutation
        )
        mutants: list[Seed] = []
        for seed, trials in zip(sampled, allocation):
            for _ in range(trials):
                mutant = mutate(seed, self.cfg.mutation, self.rng)
                if mutant is seed or np.array_equal(mutant.image, seed.image):
                    continue
                mutants.append(mutant)
        traces = forward_with_trace(self.model, [m.image for m in mutants])
        survivors: list[Seed] = []
        survivor_traces = []
        failed_here = 0
        for mutant, trace in zip(mutants, traces):
            if trace.label != mutant.label:
                self.failed.append(
                    FailedTest(
                        image=mutant.image,
                        label=mutant.label,
                        predicted=trace.label,
                        transform_log=mutant.transform_log,
                        batch_id=entry.batch.id,
                        iteration=iteration,
                        reference=mutant.reference,
                        original=mutant.original,
                    )
                )
                failed_here += 1
            else:
                survivors.append(mutant)
                survivor_traces.append(trace)
        items = batch_coverage_items(survivor_traces, self.profile, self.cfg.criterion)
        gained = self.state.update(items)
        if self.item_log is not None:
            self.item_log.append(items)
        keep = gained if self.cfg.guided else bool(survivors)
        if keep and survivors:
            self.pool.append(PoolEntry(Batch(survivors, self._next_batch_id)))
            self._next_batch_id += 1
        record = IterationRecord(
            iteration=iteration,
            batch_id=entry.batch.id,
            mutants=len(mutants),
            failed=failed_here,
            gained=gained,
            coverage=self.coverage(),
        )
        self.records.append(record)
        return record

    def run(self) -> FuzzReport:
        start = time.monotonic()
        iteration = 0
        while True:
            if self.cfg.budget_iters is not None and iteration >= self.cfg.budget_iters:
                break
            if (
                self.cfg.budget_seconds is not None
                and time.monotonic() - start >= self.cfg.budget_seconds
            ):
                break
            iteration += 1
            self.step(iteration)
        return self.report()

    def report(self) -> FuzzReport:
        return FuzzReport(
            criterion=self.cfg.criterion.kind,
            rng_seed=self.cfg.rng_seed,
            initial_coverage=self.initial_coverage,
            iterations=list(self.records),
            failed_tests=len(self.failed),
            pool_batches=len(self.pool),
            final_coverage=self.records[-1].coverage if self.records else self.initial_coverage,
            config=asdict(self.cfg),
        )


def fuzz_loop(
    model: Model,
    profile: NeuronProfile | None,
    images: list[np.ndarray],
    labels: list[int],
    cfg: FuzzConfig,
) -> tuple[FuzzReport, list[FailedTest]]:
    """Seed the pool from a corpus, run to budget, return report + failed tests."""
    fuzzer = Fuzzer(model, profile, cfg)
    fuzzer.seed_pool(images, labels)
    report = fuzzer.run()
    return report, fuzzer.failed


def quant_diff_run(
    model: Model, ratio: float, rng_seed: int, tests: list[np.ndarray]
) -> list[tuple[int, int, int]]:
    """Disagreements (input index, full label, quantized label) between a model
    and its 16-bit-truncated variant."""
    quantized = quantize_model(model, ratio, rng_seed)
    full = predict_labels(model, tests)
    quant = predict_labels(quantized, tests)
    return [(i, a, b) for i, (a, b) in enumerate(zip(full, quant)) if a != b]


# ---------------------------------------------------------------------------
# Run-directory persistence

_COVERAGE_FMT = "{:.6f}"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _record_json(rec: IterationRecord) -> str:
    return _dump(
        {
            "iteration": rec.iteration,
            "batch": rec.batch_id,
            "mutants": rec.mutants,
            "failed": rec.failed,
            "gained": rec.gained,
            "coverage": _COVERAGE_FMT.format(rec.coverage),
        }
    )


def write_run_dir(
    out_dir: str | Path,
    report: FuzzReport,
    failed: list[FailedTest],
    pool: list[PoolEntry] | None = None,
) -> Path:
    """Write config.json, report.jsonl, summary.json, failed/, and optionally pool/."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(report.config, sort_keys=True, indent=2) + "\n")
    with open(out / "report.jsonl", "w") as fh:
        for rec in report.iterations:
            fh.write(_record_json(rec) + "\n")
    summary = {
        "criterion": report.criterion,
        "rng_seed": report.rng_seed,
        "iterations": len(report.iterations),
        "initial_coverage": _COVERAGE_FMT.format(report.initial_coverage),
        "final_coverage": _COVERAGE_FMT.format(report.final_coverage),
        "failed_tests": report.failed_tests,
        "pool_batches": report.pool_batches,
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    failed_dir = out / "failed"
    failed_dir.mkdir(exist_ok=True)
    with open(failed_dir / "meta.jsonl", "w") as fh:
        for i, ft in enumerate(failed):
            ext = "pgm" if ft.image.shape[2] == 1 else "ppm"
            name, ref_name, orig_name = (
                f"{i:05d}.{ext}",
                f"{i:05d}_ref.{ext}",
                f"{i:05d}_orig.{ext}",
            )
            netpbm.write_image(failed_dir / name, ft.image)
            netpbm.write_image(failed_dir / ref_name, ft.reference)
            netpbm.write_image(failed_dir / orig_name, ft.original)
            fh.write(
                _dump(
                    {
                        "file": name,
                        "ref_file": ref_name,
                        "orig_file": orig_name,
                        "label": ft.label,
                        "predicted": ft.predicted,
                        "batch": ft.batch_id,
                        "iteration": ft.iteration,
                        "transform_log": [[t, p] for t, p in ft.transform_log],
                    }
                )
                + "\n"
            )
    if pool is not None:
        _write_pool_dir(out / "pool", pool)
    return out


def _write_pool_dir(pool_dir: Path, pool: list[PoolEntry]) -> None:
    pool_dir.mkdir(exist_ok=True)
    with open(pool_dir / "meta.jsonl", "w") as fh:
        for entry in pool:
            batch_dir = pool_dir / f"batch_{entry.batch.id:05d}"
            batch_dir.mkdir(exist_ok=True)
            for j, seed in enumerate(entry.batch.seeds):
                ext = "pgm" if seed.image.shape[2] == 1 else "ppm"
                name = f"batch_{entry.batch.id:05d}/{j:03d}.{ext}"
                ref_name = f"batch_{entry.batch.id:05d}/{j:03d}_ref.{ext}"
                orig_name = f"batch_{entry.batch.id:05d}/{j:03d}_orig.{ext}"
                netpbm.write_image(pool_dir / name, seed.image)
                netpbm.write_image(pool_dir / ref_name, seed.reference)
                netpbm.write_image(pool_dir / orig_name, seed.original)
                fh.write(
                    _dump(
                        {
                            "batch": entry.batch.id,
                            "seed": j,
                            "file": name,
                            "ref_file": ref_name,
                            "orig_file": orig_name,
                            "fuzz_count": entry.fuzz_count,
                            "state": seed.state,
                            "label": seed.label,
                            "transform_log": [[t, p] for t, p in seed.transform_log],
                        }
                    )
                    + "\n"
                )
