"""Shared test helpers: independent oracles and tiny model builders.

Everything here is deliberately written as a separate code path from the
package (bit-twiddling instead of numpy casts, per-neuron Python loops
instead of vectorized ops, nested-loop convolution instead of im2col) so
tests compare two implementations rather than one with itself.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from neuronfuzz.coverage import CriterionConfig
from neuronfuzz.model import Layer, Model

# ---------------------------------------------------------------------------
# IEEE 754 binary16 reference (integer bit manipulation, round-to-nearest-even)


def _round_shift_even(value: int, shift: int) -> int:
    q = value >> shift
    rem = value & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    if rem > half or (rem == half and q & 1):
        q += 1
    return q


def float_to_half_bits(value: float) -> int:
    fbits = struct.unpack("<I", struct.pack("<f", value))[0]
    sign = (fbits >> 16) & 0x8000
    f_exp = fbits & 0x7F800000
    f_sig = fbits & 0x007FFFFF
    if f_exp == 0x7F800000:  # inf / nan
        if f_sig:
            ret = 0x7C00 | (f_sig >> 13)
            return sign | (ret if ret != 0x7C00 else 0x7C01)
        return sign | 0x7C00
    if f_exp >= 0x47800000:  # |v| >= 2^16 always overflows to inf
        return sign | 0x7C00
    exp = f_exp >> 23  # biased f32 exponent
    if exp <= 112:  # |v| < 2^-14: subnormal half or zero
        if exp < 102:  # |v| < 2^-25 rounds to zero (2^-25 itself ties to even -> 0)
            return sign
        sig = 0x00800000 | f_sig
        q = _round_shift_even(sig, 126 - exp)  # units of 2^-24
        return sign | q  # q == 1024 lands exactly on the smallest normal half
    h_exp = exp - 112  # rebias: 127 - 15
    q = _round_shift_even(f_sig, 13)
    if q == 1024:
        h_exp += 1
        q = 0
    if h_exp >= 31:
        return sign | 0x7C00
    return sign | (h_exp << 10) | q


def half_bits_to_float(hbits: int) -> float:
    sign = -1.0 if hbits & 0x8000 else 1.0
    exp = (hbits >> 10) & 0x1F
    sig = hbits & 0x3FF
    if exp == 0:
        return sign * math.ldexp(sig, -24)
    if exp == 31:
        return sign * math.inf if sig == 0 else math.nan
    return sign * math.ldexp(1024 + sig, exp - 25)


def reference_truncate16(value: float) -> np.float32:
    """Independent f32 -> binary16 -> f32 round trip."""
    return np.float32(half_bits_to_float(float_to_half_bits(value)))


# ---------------------------------------------------------------------------
# Brute-force coverage bucketer (per-neuron Python loops, f32 scalar math)


def brute_coverage_items(trace, profile, cfg: CriterionConfig) -> set[tuple[int, int]]:
    items: set[tuple[int, int]] = set()
    values = trace.values
    if cfg.kind == "nc":
        for _, start, stop in trace.layout:
            layer_vals = values[start:stop]
            lo, hi = layer_vals.min(), layer_vals.max()
            span = hi - lo
            if span <= 0:
                continue
            for j in range(stop - start):
                if (layer_vals[j] - lo) / span > cfg.t:
                    items.add((start + j, 0))
    elif cfg.kind == "kmnc":
        k = cfg.k_sections
        for n in range(values.shape[0]):
            v, lo, hi = values[n], profile.low[n], profile.high[n]
            if not (lo <= v <= hi):
                continue
            if hi > lo:
                sec = int(np.floor((v - lo) / (hi - lo) * k))
                items.add((n, min(sec, k - 1)))
            else:
                items.add((n, 0))
    elif cfg.kind in ("nbc", "snac"):
        m = cfg.overflow_buckets
        for n in range(values.shape[0]):
            v, lo, hi = values[n], profile.low[n], profile.high[n]
            sigma_b = np.maximum(profile.std[n], 1e-6) / m
            if v > hi:
                j = min(int((v - hi) / sigma_b), m - 1)
                items.add((n, (m + j) if cfg.kind == "nbc" else j))
            elif cfg.kind == "nbc" and v < lo:
                j = min(int((lo - v) / sigma_b), m - 1)
                items.add((n, j))
    elif cfg.kind in ("tknc", "bknc"):
        for _, start, stop in trace.layout:
            ranked = sorted(
                range(stop - start),
                key=lambda j: (-values[start + j], j) if cfg.kind == "tknc" else (values[start + j], j),
            )
            for j in ranked[: cfg.top_k]:
                items.add((start + j, 0))
    else:
        raise ValueError(cfg.kind)
    return items


# ---------------------------------------------------------------------------
# Nested-loop forward pass (independent of the engine's im2col path)


def brute_forward(model: Model, image: np.ndarray):
    """Returns (neuron_values, output) via dumb loops, float64 accumulation."""
    x = image.astype(np.float64)
    if image.dtype == np.uint8:
        x = x / 255.0
    outs = []
    for layer in model.layers:
        x = _brute_layer(x, layer)
        outs.append(x)
    parts = []
    for i, _, _ in model.neuron_layout:
        src = outs[i]
        if i + 1 < len(model.layers) and model.layers[i + 1].kind in ("relu", "softmax"):
            src = outs[i + 1]
        if model.layers[i].kind == "conv2d":
            parts.append([float(np.mean(src[:, :, c])) for c in range(src.shape[2])])
        else:
            parts.append([float(v) for v in src])
    flat = [v for p in parts for v in p]
    return np.array(flat), np.asarray(outs[-1]).reshape(-1)


def _brute_layer(x, layer: Layer):
    if layer.kind == "relu":
        return np.maximum(x, 0.0)
    if layer.kind == "flatten":
        return x.reshape(-1)
    if layer.kind == "softmax":
        e = np.exp(x - x.max())
        return e / e.sum()
    if layer.kind == "dense":
        w = layer.weight.astype(np.float64)
        b = layer.bias.astype(np.float64)
        out = np.zeros(w.shape[1])
        for o in range(w.shape[1]):
            acc = b[o]
            for i in range(w.shape[0]):
                acc += x[i] * w[i, o]
            out[o] = acc
        return out
    if layer.kind == "conv2d":
        kh, kw, c_in, c_out = layer.kernel.shape
        sh, sw = layer.stride
        h, w_dim = x.shape[:2]
        if layer.padding == "same":
            oh, ow = math.ceil(h / sh), math.ceil(w_dim / sw)
            pad_h = max((oh - 1) * sh + kh - h, 0)
            pad_w = max((ow - 1) * sw + kw - w_dim, 0)
            top, left = pad_h // 2, pad_w // 2
        else:
            oh, ow = (h - kh) // sh + 1, (w_dim - kw) // sw + 1
            top = left = 0
        out = np.zeros((oh, ow, c_out))
        for oy in range(oh):
            for ox in range(ow):
                for oc in range(c_out):
                    acc = float(layer.bias[oc])
                    for ky in range(kh):
                        for kx in range(kw):
                            iy, ix = oy * sh + ky - top, ox * sw + kx - left
                            if 0 <= iy < h and 0 <= ix < w_dim:
                                for ic in range(c_in):
                                    acc += x[iy, ix, ic] * float(layer.kernel[ky, kx, ic, oc])
                    out[oy, ox, oc] = acc
        return out
    if layer.kind in ("maxpool2d", "avgpool2d"):
        ph, pw = layer.window
        sh, sw = layer.stride
        h, w_dim, c = x.shape
        oh, ow = (h - ph) // sh + 1, (w_dim - pw) // sw + 1
        out = np.zeros((oh, ow, c))
        for oy in range(oh):
            for ox in range(ow):
                for ch in range(c):
                    win = [
                        x[oy * sh + ky, ox * sw + kx, ch]
                        for ky in range(ph)
                        for kx in range(pw)
                    ]
                    out[oy, ox, ch] = max(win) if layer.kind == "maxpool2d" else sum(win) / len(win)
        return out
    raise ValueError(layer.kind)


# ---------------------------------------------------------------------------
# Tiny model builders


def dense_only_model(weight, bias, softmax=False) -> Model:
    weight = np.asarray(weight, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    layers = [Layer("flatten"), Layer("dense", weight=weight, bias=bias)]
    if softmax:
        layers.append(Layer("softmax"))
    return Model((1, 1, weight.shape[0]), layers)


def mean_pixel_classifier(n_pixels: int, threshold: float) -> Model:
    """Two-class model: class 0 iff mean scaled pixel value > threshold."""
    side = int(math.isqrt(n_pixels))
    assert side * side == n_pixels
    weight = np.zeros((n_pixels, 2), dtype=np.float32)
    weight[:, 0] = 1.0 / n_pixels
    bias = np.array([0.0, threshold], dtype=np.float32)
    return Model(
        (side, side, 1),
        [Layer("flatten"), Layer("dense", weight=weight, bias=bias)],
    )


def random_small_model(rng: np.random.Generator) -> Model:
    """Random tiny conv/dense model over an 8x8 input for property tests."""
    c_in = int(rng.integers(1, 3))
    layers = []
    use_conv = rng.random() < 0.7
    shape = (8, 8, c_in)
    flat = 8 * 8 * c_in
    if use_conv:
        c_out = int(rng.integers(2, 5))
        k = int(rng.choice([1, 3]))
        padding = str(rng.choice(["same", "valid"]))
        kernel = rng.normal(0, 0.5, (k, k, c_in, c_out)).astype(np.float32)
        layers += [
            Layer("conv2d", kernel=kernel, bias=rng.normal(0, 0.1, c_out).astype(np.float32),
                  stride=(1, 1), padding=padding),
            Layer("relu"),
            Layer("maxpool2d", window=(2, 2), stride=(2, 2)),
        ]
        oh = 8 if padding == "same" else 8 - k + 1
        flat = (oh // 2) * (oh // 2) * c_out
    layers.append(Layer("flatten"))
    hidden = int(rng.integers(3, 8))
    layers += [
        Layer("dense", weight=rng.normal(0, 0.3, (flat, hidden)).astype(np.float32),
              bias=rng.normal(0, 0.1, hidden).astype(np.float32)),
        Layer("relu"),
        Layer("dense", weight=rng.normal(0, 0.3, (hidden, 3)).astype(np.float32),
              bias=rng.normal(0, 0.1, 3).astype(np.float32)),
    ]
    return Model((8, 8, c_in), layers)


def random_images(rng: np.random.Generator, count: int, shape) -> list[np.ndarray]:
    return [rng.integers(0, 256, shape, dtype=np.uint8) for _ in range(count)]
