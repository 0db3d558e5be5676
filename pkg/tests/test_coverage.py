import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuronfuzz.coverage import (
    CoverageState,
    CriterionConfig,
    NeuronProfile,
    batch_coverage_items,
    coverage_items,
    coverage_ratio,
    load_profile,
    profile_dataset,
    save_profile,
    update_and_gain,
)
from neuronfuzz.model import ActivationTrace, forward_with_trace
from util import brute_coverage_items, dense_only_model, random_images, random_small_model


def make_trace(values, layout=None):
    values = np.asarray(values, dtype=np.float32)
    if layout is None:
        layout = ((0, 0, values.shape[0]),)
    return ActivationTrace(values, 0, values, tuple(layout))


def make_profile(low, high, std=None):
    low = np.asarray(low, dtype=np.float32)
    high = np.asarray(high, dtype=np.float32)
    mean = (low + high) / 2
    if std is None:
        std = np.ones_like(low)
    return NeuronProfile(low, high, mean, np.asarray(std, dtype=np.float32))


# ---------------------------------------------------------------------------
# profile_dataset


def test_profile_single_input_degenerate():
    model = dense_only_model(np.eye(2), np.zeros(2))
    x = np.array([[[0.25, 0.5]]], dtype=np.float32)
    profile = profile_dataset(model, [x])
    assert profile.low.tolist() == profile.high.tolist() == profile.mean.tolist()
    assert profile.std.tolist() == [0.0, 0.0]


def test_profile_two_inputs_min_max_mean():
    model = dense_only_model(np.eye(1), np.zeros(1))
    xs = [np.array([[[1.0]]], dtype=np.float32), np.array([[[3.0]]], dtype=np.float32)]
    profile = profile_dataset(model, xs)
    assert profile.low.tolist() == [1.0]
    assert profile.high.tolist() == [3.0]
    assert profile.mean.tolist() == [2.0]
    assert profile.std.tolist() == [1.0]


def test_profile_empty_dataset():
    model = dense_only_model(np.eye(1), np.zeros(1))
    with pytest.raises(ValueError, match="empty dataset"):
        profile_dataset(model, [])


def test_profile_fixture_matches_brute_force(toy_model, toy_corpus, toy_profile):
    images, _, _ = toy_corpus
    stacked = np.stack([t.values for t in forward_with_trace(toy_model, images)])
    assert toy_profile.low.tobytes() == stacked.min(axis=0).tobytes()
    assert toy_profile.high.tobytes() == stacked.max(axis=0).tobytes()
    mean64 = stacked.astype(np.float64).mean(axis=0)
    std64 = stacked.astype(np.float64).std(axis=0)
    assert toy_profile.mean.tobytes() == mean64.astype(np.float32).tobytes()
    assert toy_profile.std.tobytes() == std64.astype(np.float32).tobytes()
    assert np.all(toy_profile.low <= toy_profile.mean)
    assert np.all(toy_profile.mean <= toy_profile.high)
    assert len(toy_profile) == toy_model.neuron_count


def test_profile_file_round_trip(tmp_path, toy_profile):
    path = tmp_path / "p.bin"
    save_profile(toy_profile, path)
    loaded = load_profile(path)
    for name in ("low", "high", "mean", "std"):
        assert getattr(loaded, name).tobytes() == getattr(toy_profile, name).tobytes()


def test_profile_file_rejects_truncation(tmp_path, toy_profile):
    path = tmp_path / "p.bin"
    save_profile(toy_profile, path)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_profile(path)


# ---------------------------------------------------------------------------
# coverage_items per criterion


def test_kmnc_section_examples():
    cfg = CriterionConfig(kind="kmnc", k_sections=5)
    profile = make_profile([0.0], [10.0])
    assert coverage_items(make_trace([3.9]), profile, cfg) == {(0, 1)}
    assert coverage_items(make_trace([10.0]), profile, cfg) == {(0, 4)}
    # out-of-range value is an nbc upper item, not a kmnc item
    assert coverage_items(make_trace([12.0]), profile, cfg) == set()
    nbc = CriterionConfig(kind="nbc", overflow_buckets=10)
    items = coverage_items(make_trace([12.0]), profile, nbc)
    assert len(items) == 1 and next(iter(items))[1] >= 10


def test_kmnc_degenerate_neuron_single_section():
    cfg = CriterionConfig(kind="kmnc", k_sections=5)
    profile = make_profile([2.0], [2.0])
    assert coverage_items(make_trace([2.0]), profile, cfg) == {(0, 0)}
    assert coverage_items(make_trace([2.5]), profile, cfg) == set()


def test_nc_min_max_scaling_example():
    cfg = CriterionConfig(kind="nc", t=0.5)
    trace = make_trace([0.0, 2.0, 4.0])
    assert coverage_items(trace, None, cfg) == {(2, 0)}


def test_nc_degenerate_layer_covers_nothing():
    cfg = CriterionConfig(kind="nc", t=0.5)
    trace = make_trace([3.0, 3.0, 3.0])
    assert coverage_items(trace, None, cfg) == set()


def test_tknc_example_and_saturation():
    trace = make_trace([1.0, 3.0, 2.0])
    cfg = CriterionConfig(kind="tknc", top_k=2)
    assert coverage_items(trace, None, cfg) == {(1, 0), (2, 0)}
    cfg_all = CriterionConfig(kind="tknc", top_k=5)
    assert coverage_items(trace, None, cfg_all) == {(0, 0), (1, 0), (2, 0)}


def test_bknc_bottom_k_with_tie_broken_by_lower_id():
    trace = make_trace([2.0, 1.0, 1.0, 5.0])
    cfg = CriterionConfig(kind="bknc", top_k=2)
    assert coverage_items(trace, None, cfg) == {(1, 0), (2, 0)}
    tie = make_trace([7.0, 7.0, 7.0])
    cfg1 = CriterionConfig(kind="tknc", top_k=2)
    assert coverage_items(tie, None, cfg1) == {(0, 0), (1, 0)}


def test_nbc_bucket_depths_and_clamp():
    cfg = CriterionConfig(kind="nbc", overflow_buckets=4)
    profile = make_profile([0.0], [1.0], std=[2.0])  # sigma_b = 0.5
    assert coverage_items(make_trace([1.2]), profile, cfg) == {(0, 4)}
    assert coverage_items(make_trace([1.7]), profile, cfg) == {(0, 5)}
    assert coverage_items(make_trace([99.0]), profile, cfg) == {(0, 7)}  # clamped
    assert coverage_items(make_trace([-0.2]), profile, cfg) == {(0, 0)}
    assert coverage_items(make_trace([-99.0]), profile, cfg) == {(0, 3)}
    snac = CriterionConfig(kind="snac", overflow_buckets=4)
    assert coverage_items(make_trace([1.7]), profile, snac) == {(0, 1)}
    assert coverage_items(make_trace([-99.0]), profile, snac) == set()


def test_nbc_degenerate_neuron_strict_inequality():
    cfg = CriterionConfig(kind="nbc", overflow_buckets=3)
    profile = make_profile([1.0], [1.0], std=[0.0])
    assert coverage_items(make_trace([1.0]), profile, cfg) == set()
    assert coverage_items(make_trace([1.0 + 1e-5]), profile, cfg) != set()


def test_items_match_brute_force_all_criteria():
    rng = np.random.default_rng(21)
    for _ in range(30):
        model = random_small_model(rng)
        images = random_images(rng, 8, model.input_shape)
        traces = forward_with_trace(model, images)
        profile = profile_dataset(model, images[:5])
        for kind in ("nc", "kmnc", "nbc", "snac", "tknc", "bknc"):
            cfg = CriterionConfig(kind=kind, k_sections=7, top_k=2, overflow_buckets=4)
            for trace in traces:
                assert coverage_items(trace, profile, cfg) == brute_coverage_items(
                    trace, profile, cfg
                ), kind


@settings(max_examples=200)
@given(
    low=st.floats(-100, 100, width=32),
    span=st.floats(0.0009765625, 100, width=32),
    frac=st.floats(0, 1),
    k=st.integers(1, 50),
)
def test_kmnc_sections_partition_range(low, span, frac, k):
    # every in-range value maps to exactly one section in [0, k)
    high = np.float32(low) + np.float32(span)
    v = np.float32(low) + np.float32(frac) * (high - np.float32(low))
    v = np.float32(min(max(v, np.float32(low)), high))
    profile = make_profile([low], [float(high)])
    cfg = CriterionConfig(kind="kmnc", k_sections=k)
    items = coverage_items(make_trace([float(v)]), profile, cfg)
    assert len(items) == 1
    ((_, section),) = items
    assert 0 <= section < k


# ---------------------------------------------------------------------------
# update_and_gain / coverage_ratio


def test_update_gain_transitions():
    state = CoverageState("nc")
    state, gained = update_and_gain(state, {(0, 0)})
    assert gained and state.covered == {(0, 0)}
    _, gained = update_and_gain(state, {(0, 0)})
    assert not gained
    _, gained = update_and_gain(state, {(0, 0), (3, 0)})
    assert gained and state.covered == {(0, 0), (3, 0)}


def test_update_gain_empty_items():
    state = CoverageState("kmnc")
    assert state.update(set()) is False


def test_coverage_ratio_counting():
    model = dense_only_model(np.eye(2), np.zeros(2))  # 2 neurons
    kmnc = CriterionConfig(kind="kmnc", k_sections=3)
    state = CoverageState("kmnc")
    assert coverage_ratio(state, model, kmnc) == 0.0
    state.update({(0, 0), (0, 2), (1, 1)})
    assert coverage_ratio(state, model, kmnc) == 0.5
    state.update({(0, 1), (1, 0), (1, 2)})
    assert coverage_ratio(state, model, kmnc) == 1.0


def test_nbc_ratio_counts_sides_not_buckets():
    model = dense_only_model(np.eye(2), np.zeros(2))
    cfg = CriterionConfig(kind="nbc", overflow_buckets=10)
    state = CoverageState("nbc")
    state.update({(0, 0), (0, 3), (0, 7)})  # three lower buckets, one side
    assert coverage_ratio(state, model, cfg) == 0.25
    state.update({(0, 10)})  # upper side of the same neuron
    assert coverage_ratio(state, model, cfg) == 0.5


def test_snac_ratio_is_neuron_fraction():
    model = dense_only_model(np.eye(4), np.zeros(4))
    cfg = CriterionConfig(kind="snac", overflow_buckets=5)
    state = CoverageState("snac")
    state.update({(0, 0), (0, 4), (2, 1)})
    assert coverage_ratio(state, model, cfg) == 0.5


def test_fold_order_independence():
    rng = np.random.default_rng(22)
    model = random_small_model(rng)
    images = random_images(rng, 10, model.input_shape)
    traces = forward_with_trace(model, images)
    profile = profile_dataset(model, images[:4])
    cfg = CriterionConfig(kind="kmnc", k_sections=10)
    forward_state = CoverageState("kmnc")
    for t in traces:
        forward_state.update(coverage_items(t, profile, cfg))
    reverse_state = CoverageState("kmnc")
    for t in reversed(traces):
        reverse_state.update(coverage_items(t, profile, cfg))
    assert forward_state.covered == reverse_state.covered


def test_seed_profile_zero_property(toy_model, toy_corpus, toy_profile):
    # profiling over exactly the seed corpus leaves no corner region reachable
    images, _, _ = toy_corpus
    traces = forward_with_trace(toy_model, images)
    for kind in ("nbc", "snac"):
        cfg = CriterionConfig(kind=kind)
        items = batch_coverage_items(traces, toy_profile, cfg)
        assert items == set()
        state = CoverageState(kind)
        state.update(items)
        assert coverage_ratio(state, toy_model, cfg) == 0.0


def test_incremental_equals_scratch_recomputation():
    rng = np.random.default_rng(23)
    model = random_small_model(rng)
    images = random_images(rng, 20, model.input_shape)
    traces = forward_with_trace(model, images)
    profile = profile_dataset(model, images[:6])
    for kind in ("nc", "kmnc", "nbc", "snac", "tknc", "bknc"):
        cfg = CriterionConfig(kind=kind, k_sections=9, top_k=2, overflow_buckets=5)
        incremental = CoverageState(kind)
        for t in traces:
            incremental.update(coverage_items(t, profile, cfg))
        scratch = batch_coverage_items(traces, profile, cfg)
        assert incremental.covered == scratch


@given(st.sets(st.tuples(st.integers(0, 50), st.integers(0, 20)), max_size=40),
       st.sets(st.tuples(st.integers(0, 50), st.integers(0, 20)), max_size=40))
def test_update_monotone_and_gain_definition(a, b):
    state = CoverageState("kmnc")
    state.update(a)
    before = set(state.covered)
    gained = state.update(b)
    assert gained == bool(b - before)
    assert state.covered == a | b
    assert before <= state.covered


def test_criterion_config_validation():
    with pytest.raises(ValueError):
        CriterionConfig(kind="bogus")
    with pytest.raises(ValueError):
        CriterionConfig(t=1.5)
    with pytest.raises(ValueError):
        CriterionConfig(k_sections=0)
