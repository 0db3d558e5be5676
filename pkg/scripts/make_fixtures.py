#!/usr/bin/env python3
"""Regenerate the shipped fixtures under fixtures/.

Everything is seeded, so reruns reproduce the committed files bit-exactly
(given the same numpy/opencv versions). Golden forward outputs are
computed with the nested-loop oracle from tests/util.py, not the engine,
so the fixtures stay an independent check on the inference code.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

from util import brute_forward  # noqa: E402

from neuronfuzz.coverage import (  # noqa: E402
    CoverageState,
    CriterionConfig,
    batch_coverage_items,
    coverage_ratio,
    profile_dataset,
    save_profile,
)
from neuronfuzz.fuzzer import preprocess_seeds, quant_diff_run  # noqa: E402
from neuronfuzz.model import (  # noqa: E402
    Layer,
    Model,
    forward_with_trace,
    load_model,
    predict_labels,
    save_model,
)
from neuronfuzz.netpbm import write_image  # noqa: E402

FIXTURES = REPO / "fixtures"


def glorot(rng, shape, fan_in, fan_out, scale=1.0):
    std = scale * np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, shape).astype(np.float32)


def build_toy_model(rng) -> Model:
    k1 = glorot(rng, (3, 3, 1, 6), 9, 54)
    b1 = rng.normal(0.0, 0.05, 6).astype(np.float32)
    k2 = glorot(rng, (3, 3, 6, 10), 54, 90)
    b2 = rng.normal(0.0, 0.05, 10).astype(np.float32)
    w3 = glorot(rng, (360, 32), 360, 32)
    b3 = rng.normal(0.0, 0.05, 32).astype(np.float32)
    w4 = glorot(rng, (32, 10), 32, 10, scale=0.6)
    b4 = rng.normal(0.0, 0.02, 10).astype(np.float32)
    return Model(
        (28, 28, 1),
        [
            Layer("conv2d", kernel=k1, bias=b1, stride=(1, 1), padding="same"),
            Layer("relu"),
            Layer("maxpool2d", window=(2, 2), stride=(2, 2)),
            Layer("conv2d", kernel=k2, bias=b2, stride=(1, 1), padding="valid"),
            Layer("relu"),
            Layer("maxpool2d", window=(2, 2), stride=(2, 2)),
            Layer("flatten"),
            Layer("dense", weight=w3, bias=b3),
            Layer("relu"),
            Layer("dense", weight=w4, bias=b4),
            Layer("softmax"),
        ],
    )


def synth_image(rng, index) -> np.ndarray:
    h = w = 28
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    kind = index % 5
    if kind == 0:  # gaussian blobs
        img = np.zeros((h, w))
        for _ in range(int(rng.integers(1, 4))):
            cy, cx = rng.uniform(5, 23, 2)
            sy, sx = rng.uniform(2, 6, 2)
            img += rng.uniform(120, 255) * np.exp(
                -(((ys - cy) / sy) ** 2 + ((xs - cx) / sx) ** 2) / 2
            )
    elif kind == 1:  # oriented stripes
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.25, 0.9)
        phase = rng.uniform(0, 2 * np.pi)
        img = 127.5 * (1 + np.sin(freq * (np.cos(theta) * xs + np.sin(theta) * ys) + phase))
    elif kind == 2:  # smoothed noise
        img = rng.uniform(0, 255, (h, w))
        kernel = np.ones(5) / 5
        for axis in (0, 1):
            img = np.apply_along_axis(
                lambda row: np.convolve(row, kernel, mode="same"), axis, img
            )
        img = (img - img.min()) / (img.max() - img.min() + 1e-9) * 255
    elif kind == 3:  # gradient plus one blob
        gx, gy = rng.uniform(-4, 4, 2)
        img = gx * xs + gy * ys
        cy, cx = rng.uniform(6, 22, 2)
        img += rng.uniform(100, 220) * np.exp(-(((ys - cy) / 4) ** 2 + ((xs - cx) / 4) ** 2) / 2)
        img = img - img.min()
    else:  # rectangles
        img = np.full((h, w), rng.uniform(0, 40))
        for _ in range(int(rng.integers(1, 4))):
            y0, x0 = rng.integers(0, 18, 2)
            dy, dx = rng.integers(4, 10, 2)
            img[y0 : y0 + dy, x0 : x0 + dx] = rng.uniform(100, 255)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8).reshape(h, w, 1)


def write_toy_fixtures():
    rng = np.random.default_rng(20240801)
    model = build_toy_model(rng)
    save_model(model, FIXTURES / "lenet_toy")
    model = load_model(FIXTURES / "lenet_toy")

    corpus_dir = FIXTURES / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    images = [synth_image(rng, i) for i in range(50)]
    names = [f"img_{i:03d}.pgm" for i in range(50)]
    for name, img in zip(names, images):
        write_image(corpus_dir / name, img)
    labels = predict_labels(model, images)
    (corpus_dir / "labels.csv").write_text(
        "".join(f"{n},{l}\n" for n, l in zip(names, labels))
    )
    print("label histogram:", np.bincount(labels, minlength=10).tolist())

    golden = {"all_zero": {}, "corpus": {}}
    zero = np.zeros((28, 28, 1), dtype=np.uint8)
    values, output = brute_forward(model, zero)
    golden["all_zero"] = {"output": output.tolist(), "neuron_values": values.tolist()}
    for name, img in list(zip(names, images))[:5]:
        _, output = brute_forward(model, img)
        golden["corpus"][name] = {"output": output.tolist()}
    (FIXTURES / "lenet_toy" / "golden.json").write_text(json.dumps(golden, indent=2) + "\n")

    profile = profile_dataset(model, images)
    save_profile(profile, FIXTURES / "lenet_toy" / "profile.bin")

    batches = preprocess_seeds(model, images, labels, batch_size=32)
    name_batches = []
    position = 0
    for batch in batches:
        name_batches.append(names[position : position + len(batch.seeds)])
        position += len(batch.seeds)
    (FIXTURES / "lenet_toy" / "preprocess_golden.json").write_text(
        json.dumps({"batch_size": 32, "batches": name_batches}, indent=2) + "\n"
    )

    # quick sanity numbers for the committed fixtures
    traces = forward_with_trace(model, images)
    cfg = CriterionConfig(kind="kmnc", k_sections=100)
    state = CoverageState("kmnc")
    state.update(batch_coverage_items(traces, profile, cfg))
    print(f"neurons: {model.neuron_count}, initial kmnc: {coverage_ratio(state, model, cfg):.4f}")
    return model, images, labels


def write_boundary_fixtures():
    rng = np.random.default_rng(77001)
    n = 16
    w0 = rng.uniform(-1.0, 1.0, n)
    w1 = w0 + rng.uniform(-1.0, 1.0, n) * 2e-4
    weight = np.stack([w0, w1], axis=1).astype(np.float32)
    bias = np.zeros(2, dtype=np.float32)
    model = Model(
        (4, 4, 1),
        [Layer("flatten"), Layer("dense", weight=weight, bias=bias)],
    )
    save_model(model, FIXTURES / "boundary")
    model = load_model(FIXTURES / "boundary")

    flipping, stable = [], []
    for _ in range(20000):
        img = rng.integers(0, 256, (4, 4, 1), dtype=np.uint8)
        if quant_diff_run(model, 1.0, 0, [img]):
            if len(flipping) < 4:
                flipping.append(img)
        elif len(stable) < 12:
            stable.append(img)
        if len(flipping) == 4 and len(stable) == 12:
            break
    assert len(flipping) >= 1, "no quantization flip found; adjust the construction"
    images = flipping + stable
    tests_dir = FIXTURES / "boundary" / "tests"
    tests_dir.mkdir(parents=True, exist_ok=True)
    names = [f"img_{i:03d}.pgm" for i in range(len(images))]
    for name, img in zip(names, images):
        write_image(tests_dir / name, img)
    labels = predict_labels(model, images)
    (tests_dir / "labels.csv").write_text(
        "".join(f"{n},{l}\n" for n, l in zip(names, labels))
    )
    full = len(quant_diff_run(model, 1.0, 0, images))
    print(f"boundary fixture: {full} disagreements at ratio 1.0 over {len(images)} tests")


if __name__ == "__main__":
    FIXTURES.mkdir(exist_ok=True)
    write_toy_fixtures()
    write_boundary_fixtures()
    print("fixtures written to", FIXTURES)
