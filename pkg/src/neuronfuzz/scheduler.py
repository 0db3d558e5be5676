"""Batch selection and per-seed trial allocation.

Batches are picked by rejection sampling weighted by how often they
have already been fuzzed (seldom-fuzzed batches are preferred, with a
probability floor so old batches stay reachable). Within a selected
batch, a fixed trial budget is split across sampled seeds in proportion
to their remaining mutation potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from neuronfuzz.mutation import MutationConfig, Seed, mutation_potential

_MAX_REJECTIONS = 100


@dataclass
class Batch:
    seeds: list[Seed]
    id: int

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("batch must be nonempty")

    def __len__(self) -> int:
        return len(self.seeds)


@dataclass
class PoolEntry:
    batch: Batch
    fuzz_count: int = 0


@dataclass
class ScheduleConfig:
    gamma: float = 20.0  # fuzz-count scale of the selection probability
    p_min: float = 0.1  # probability floor for much-fuzzed batches
    trials_per_batch: int = 64  # mutation trials per selected batch
    sample_size: int = 5  # seeds sampled per batch

    def __post_init__(self):
        if not 0.0 < self.p_min < 1.0:
            raise ValueError(f"p_min must be in (0, 1), got {self.p_min}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.trials_per_batch < 1 or self.sample_size < 1:
            raise ValueError("trials_per_batch and sample_size must be >= 1")


def batch_probability(entry: PoolEntry, cfg: ScheduleConfig) -> float:
    """Selection probability decaying linearly in fuzz count down to p_min."""
    f = entry.fuzz_count
    if f < (1.0 - cfg.p_min) * cfg.gamma:
        return 1.0 - f / cfg.gamma
    return cfg.p_min


def select_next(
    pool: list[PoolEntry], cfg: ScheduleConfig, rng: np.random.Generator
) -> PoolEntry:
    """Pick a batch by rejection sampling on batch_probability.

    Falls back to a uniform choice after 100 rejected draws. Increments
    the chosen entry's fuzz count.
    """
    if not pool:
        raise ValueError("empty pool")
    chosen = None
    for _ in range(_MAX_REJECTIONS):
        entry = pool[int(rng.integers(len(pool)))]
        if rng.random() < batch_probability(entry, cfg):
            chosen = entry
            break
    if chosen is None:
        chosen = pool[int(rng.integers(len(pool)))]
    chosen.fuzz_count += 1
    return chosen


def sample_seeds(batch: Batch, cfg: ScheduleConfig, rng: np.random.Generator) -> list[Seed]:
    """Uniformly sample min(sample_size, len) distinct seeds, original order."""
    if len(batch.seeds) <= cfg.sample_size:
        return list(batch.seeds)
    idx = rng.choice(len(batch.seeds), size=cfg.sample_size, replace=False)
    return [batch.seeds[i] for i in sorted(int(i) for i in idx)]


def power_schedule(seeds: list[Seed], total_trials: int, cfg: MutationConfig) -> list[int]:
    """Split ``total_trials`` across seeds proportionally to mutation potential.

    Largest-remainder rounding, so the result sums to the total exactly.
    Seeds with potential <= 0 get nothing; if no seed has positive
    potential the budget is split uniformly instead. Remainder ties go
    to the earlier index.
    """
    if not seeds:
        raise ValueError("no seeds to schedule")
    if total_trials < 1:
        raise ValueError(f"total_trials must be >= 1, got {total_trials}")
    weights = [max(mutation_potential(s, cfg), 0.0) for s in seeds]
    total_weight = sum(weights)
    if total_weight <= 0.0:
        weights = [1.0] * len(seeds)
        total_weight = float(len(seeds))
    quotas = [total_trials * w / total_weight for w in weights]
    alloc = [math.floor(q) for q in quotas]
    remainder = total_trials - sum(alloc)
    eligible = [i for i in range(len(seeds)) if weights[i] > 0.0]
    eligible.sort(key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in eligible[:remainder]:
        alloc[i] += 1
    return alloc
