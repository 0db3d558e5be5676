#!/usr/bin/env python3
"""Build a seeded LeNet-style Keras model and export a full engine fixture:
model files, a small synthetic corpus, and golden forward outputs."""

import os
import sys
from pathlib import Path

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

import numpy as np
from tensorflow import keras

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import seeded_weights  # noqa: E402

from nnexport import export_dataset, export_golden, export_model  # noqa: E402


def main() -> None:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    model = keras.Sequential(
        [
            keras.layers.Input((28, 28, 1)),
            keras.layers.Conv2D(6, 5, padding="same", activation="relu"),
            keras.layers.MaxPooling2D(2),
            keras.layers.Conv2D(16, 5, padding="valid", activation="relu"),
            keras.layers.MaxPooling2D(2),
            keras.layers.Flatten(),
            keras.layers.Dense(120, activation="relu"),
            keras.layers.Dense(84, activation="relu"),
            keras.layers.Dense(10),
        ],
        name="lenet_fixture",
    )
    seeded_weights(model, rng_seed=41)
    manifest = export_model(model, out / "model")
    export_golden(model, out / "model", count=100, rng_seed=3)
    rng = np.random.default_rng(17)
    images = rng.integers(0, 256, (50, 28, 28, 1), dtype=np.uint8)
    predictions = np.argmax(model.predict(images.astype(np.float32) / 255.0, verbose=0), axis=1)
    count = export_dataset(list(images), predictions.tolist(), out / "corpus")
    print(f"exported {manifest.source_model}: {len(manifest.layer_map)} layers, "
          f"{count} corpus images -> {out}")


if __name__ == "__main__":
    main()
