"""Neuron coverage criteria and the bucketed coverage-gain bookkeeping.

Six criteria are supported, all expressed over (neuron id, bucket id)
items so that gain detection is a set union regardless of criterion:

* nc    -- neuron activated (per-layer min-max scaled value > t)
* kmnc  -- which of k equal sections of a neuron's profiled [low, high]
           range the value falls in
* nbc   -- corner regions below low / above high, sub-bucketed in steps
           of std/m so deeper corner inputs still register as new
* snac  -- nbc's upper corner only
* tknc  -- neuron among the top-k of its layer
* bknc  -- neuron among the bottom-k of its layer
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from neuronfuzz.model import ActivationTrace, Model, forward_with_trace

CRITERIA = ("nc", "kmnc", "nbc", "snac", "tknc", "bknc")
PROFILE_CRITERIA = ("kmnc", "nbc", "snac")

_PROFILE_MAGIC = b"NFPF"
_PROFILE_VERSION = 1
_RANGE_EPS = 1e-6

Item = tuple[int, int]


@dataclass
class CriterionConfig:
    kind: str = "kmnc"
    t: float = 0.75  # nc activation threshold on min-max scaled values
    k_sections: int = 100  # kmnc sections per neuron
    top_k: int = 2  # tknc/bknc layer ranks
    overflow_buckets: int = 10  # nbc/snac sub-buckets per corner region

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in CRITERIA:
            raise ValueError(f"unknown criterion {self.kind!r} (choose from {CRITERIA})")
        if not 0.0 < self.t < 1.0:
            raise ValueError(f"t must be in (0, 1), got {self.t}")
        if self.k_sections < 1 or self.top_k < 1 or self.overflow_buckets < 1:
            raise ValueError("k_sections, top_k and overflow_buckets must be >= 1")


@dataclass
class NeuronProfile:
    """Per-neuron [low, high] range and mean/std over a profiling dataset."""

    low: np.ndarray
    high: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        for name in ("low", "high", "mean", "std"):
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            setattr(self, name, arr)
        if not (self.low.shape == self.high.shape == self.mean.shape == self.std.shape):
            raise ValueError("profile arrays must have identical length")
        if np.any(self.low > self.high):
            raise ValueError("profile has low > high")

    def __len__(self) -> int:
        return self.low.shape[0]


def profile_dataset(model: Model, data: list[np.ndarray]) -> NeuronProfile:
    """Profile per-neuron low/high/mean/std over every input in ``data``."""
    if not data:
        raise ValueError("empty dataset")
    traces = forward_with_trace(model, data)
    values = np.stack([t.values for t in traces])
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite neuron values in profiling dataset")
    return NeuronProfile(
        low=values.min(axis=0),
        high=values.max(axis=0),
        mean=values.mean(axis=0, dtype=np.float64).astype(np.float32),
        std=values.std(axis=0, dtype=np.float64).astype(np.float32),
    )


def save_profile(profile: NeuronProfile, path: str | Path) -> None:
    """Write the binary profile file: magic, version, count, then per-neuron
    little-endian f32 (low, high, mean, std) quadruples."""
    n = len(profile)
    header = _PROFILE_MAGIC + struct.pack("<II", _PROFILE_VERSION, n)
    quads = np.empty((n, 4), dtype="<f4")
    quads[:, 0] = profile.low
    quads[:, 1] = profile.high
    quads[:, 2] = profile.mean
    quads[:, 3] = profile.std
    Path(path).write_bytes(header + quads.tobytes())


def load_profile(path: str | Path) -> NeuronProfile:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != _PROFILE_MAGIC:
        raise ValueError(f"{path}: not a neuron profile file")
    version, n = struct.unpack_from("<II", data, 4)
    if version != _PROFILE_VERSION:
        raise ValueError(f"{path}: unsupported profile version {version}")
    if len(data) != 12 + 16 * n:
        raise ValueError(f"{path}: truncated profile (expected {12 + 16 * n} bytes)")
    quads = np.frombuffer(data, dtype="<f4", offset=12).reshape(n, 4)
    return NeuronProfile(quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3])


@dataclass
class CoverageState:
    """Monotone set of covered (neuron id, bucket id) items for one criterion.

    Single-writer: the fuzz orchestrator owns updates; reads may happen
    concurrently between updates.
    """

    kind: str
    covered: set[Item] = field(default_factory=set)

    def update(self, items: set[Item]) -> bool:
        """Union ``items`` into the covered set; True iff anything was new."""
        new = items - self.covered
        if new:
            self.covered |= new
            return True
        return False


def update_and_gain(state: CoverageState, batch_items: set[Item]) -> tuple[CoverageState, bool]:
    return state, state.update(batch_items)


def coverage_items(
    trace: ActivationTrace, profile: NeuronProfile | None, cfg: CriterionConfig
) -> set[Item]:
    """Covered (neuron, bucket) items of one trace under the configured criterion."""
    v = trace.values
    kind = cfg.kind
    if kind in ("kmnc", "nbc", "snac"):
        if profile is None:
            raise ValueError(f"criterion {kind} requires a neuron profile")
        if len(profile) != v.shape[0]:
            raise ValueError(f"profile length {len(profile)} != neuron count {v.shape[0]}")
    items: set[Item] = set()
    if kind == "nc":
        for _, start, stop in trace.layout:
            lv = v[start:stop]
            span = lv.max() - lv.min()
            if span <= 0:
                continue
            scaled = (lv - lv.min()) / span
            for j in np.nonzero(scaled > cfg.t)[0]:
                items.add((start + int(j), 0))
    elif kind == "kmnc":
        k = cfg.k_sections
        low, high = profile.low, profile.high
        span = high - low
        in_range = (low <= v) & (v <= high)
        with np.errstate(divide="ignore", invalid="ignore"):
            sec = np.floor((v - low) / span * k)
        sec = np.where(span > 0, sec, 0.0)
        sec = np.clip(sec, 0, k - 1).astype(np.int64)
        for n in np.nonzero(in_range)[0]:
            items.add((int(n), int(sec[n])))
    elif kind in ("nbc", "snac"):
        m = cfg.overflow_buckets
        sigma_b = np.maximum(profile.std, _RANGE_EPS) / m
        above = v > profile.high
        if above.any():
            j = np.minimum(((v - profile.high) / sigma_b).astype(np.int64), m - 1)
            upper_base = m if kind == "nbc" else 0
            for n in np.nonzero(above)[0]:
                items.add((int(n), upper_base + int(j[n])))
        if kind == "nbc":
            below = v < profile.low
            if below.any():
                j = np.minimum(((profile.low - v) / sigma_b).astype(np.int64), m - 1)
                for n in np.nonzero(below)[0]:
                    items.add((int(n), int(j[n])))
    elif kind in ("tknc", "bknc"):
        for _, start, stop in trace.layout:
            lv = v[start:stop]
            order = np.argsort(-lv if kind == "tknc" else lv, kind="stable")
            for j in order[: cfg.top_k]:
                items.add((start + int(j), 0))
    else:
        raise ValueError(f"unknown criterion {kind!r}")
    return items


def batch_coverage_items(
    traces: list[ActivationTrace], profile: NeuronProfile | None, cfg: CriterionConfig
) -> set[Item]:
    items: set[Item] = set()
    for trace in traces:
        items |= coverage_items(trace, profile, cfg)
    return items


def coverage_ratio(state: CoverageState, model: Model, cfg: CriterionConfig) -> float:
    """Covered items over total possible items for the configured criterion.

    nbc counts a neuron side (lower/upper) as covered if any of its m
    sub-buckets is, giving 2 * neuron_count total regions; snac counts
    the upper side only.
    """
    n = model.neuron_count
    if n == 0:
        return 0.0
    kind = cfg.kind
    if kind in ("nc", "tknc", "bknc", "snac"):
        return len({nid for nid, _ in state.covered}) / n
    if kind == "kmnc":
        return len(state.covered) / (n * cfg.k_sections)
    if kind == "nbc":
        m = cfg.overflow_buckets
        sides = {(nid, bucket >= m) for nid, bucket in state.covered}
        return len(sides) / (2 * n)
    raise ValueError(f"unknown criterion {kind!r}")
