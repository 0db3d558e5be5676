import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

import numpy as np
import pytest
from tensorflow import keras


def seeded_weights(model, rng_seed=0, scale=1.0):
    """Replace all weights with seeded glorot-style values for determinism."""
    rng = np.random.default_rng(rng_seed)
    for layer in model.layers:
        weights = layer.get_weights()
        new = []
        for arr in weights:
            if arr.ndim >= 2:
                fan_in = int(np.prod(arr.shape[:-1]))
                std = scale * np.sqrt(2.0 / (fan_in + arr.shape[-1]))
                new.append(rng.normal(0.0, std, arr.shape).astype(np.float32))
            else:
                new.append(rng.normal(0.0, 0.05, arr.shape).astype(np.float32))
        layer.set_weights(new)
    return model


@pytest.fixture(scope="session")
def lenet_keras():
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
    return seeded_weights(model, rng_seed=41)
