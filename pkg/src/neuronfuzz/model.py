"""Minimal feed-forward inference engine with activation tracing.

Supports the layer kinds needed for LeNet-class image classifiers:
dense, conv2d, maxpool2d, avgpool2d, relu, flatten, softmax. Models are
stored on disk as a ``model.json`` manifest plus a ``weights.bin`` blob
of little-endian 32-bit floats (conv kernels in [kh][kw][in][out]
row-major order, concatenated in manifest order). A dense/conv entry
without a bias offset loads with a zero bias.

Neuron convention: each dense output element is one neuron; each conv2d
output channel is one neuron whose value is the spatial mean of the
channel's feature map (post-activation when an activation layer follows).
Pooling, flatten and softmax layers contribute no neurons.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYER_KINDS = ("dense", "conv2d", "maxpool2d", "avgpool2d", "relu", "flatten", "softmax")
_ACTIVATION_KINDS = ("relu", "softmax")

MODEL_FORMAT = "nf-model"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for malformed manifests, shape mismatches, or truncated blobs."""


@dataclass
class Layer:
    """One network layer; parameter fields are populated per kind."""

    kind: str
    kernel: np.ndarray | None = None  # conv2d [kh, kw, in_ch, out_ch]
    weight: np.ndarray | None = None  # dense [in, out]
    bias: np.ndarray | None = None
    stride: tuple[int, int] | None = None
    padding: str | None = None  # conv2d only: "same" (zero pad) or "valid"
    window: tuple[int, int] | None = None  # pooling

    def param_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        if self.kernel is not None:
            out.append(("kernel", self.kernel))
        if self.weight is not None:
            out.append(("weight", self.weight))
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out


@dataclass
class Model:
    """An ordered layer list with a fixed [H, W, C] input shape.

    Immutable after construction: weights are frozen and safe to share
    across concurrent evaluators.
    """

    input_shape: tuple[int, int, int]
    layers: list[Layer]
    layer_shapes: list[tuple[int, ...]] = field(init=False, repr=False)
    neuron_layout: tuple[tuple[int, int, int], ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.layer_shapes = _infer_shapes(self.input_shape, self.layers)
        layout = []
        start = 0
        for i, layer in enumerate(self.layers):
            n = _layer_neuron_count(layer)
            if n:
                layout.append((i, start, start + n))
                start += n
        self.neuron_layout = tuple(layout)
        for layer in self.layers:
            for _, arr in layer.param_arrays():
                arr.setflags(write=False)

    @property
    def neuron_count(self) -> int:
        return self.neuron_layout[-1][2] if self.neuron_layout else 0

    @property
    def output_size(self) -> int:
        return int(np.prod(self.layer_shapes[-1]))


@dataclass
class ActivationTrace:
    """Per-input record of all neuron values plus the final prediction.

    ``values`` holds one float per neuron in deterministic order: layer
    order, then channel index for conv layers / flat position for dense.
    """

    values: np.ndarray
    label: int
    output: np.ndarray
    layout: tuple[tuple[int, int, int], ...]


def _layer_neuron_count(layer: Layer) -> int:
    if layer.kind == "dense":
        return int(layer.weight.shape[1])
    if layer.kind == "conv2d":
        return int(layer.kernel.shape[3])
    return 0


def _infer_shapes(input_shape, layers) -> list[tuple[int, ...]]:
    """Validate the layer chain and return per-layer output shapes."""
    if len(input_shape) != 3 or any(d < 1 for d in input_shape):
        raise ModelFormatError(f"input_shape must be [H, W, C], got {input_shape}")
    if not layers:
        raise ModelFormatError("model has no layers")
    shapes = []
    cur = tuple(input_shape)
    for i, layer in enumerate(layers):
        try:
            cur = _output_shape(cur, layer)
        except ModelFormatError as exc:
            raise ModelFormatError(f"layer {i} ({layer.kind}): {exc}") from None
        if layer.kind == "softmax" and i != len(layers) - 1:
            raise ModelFormatError(f"layer {i} (softmax): softmax only allowed as final layer")
        shapes.append(cur)
    return shapes


def _output_shape(shape, layer: Layer) -> tuple[int, ...]:
    kind = layer.kind
    if kind == "relu":
        return shape
    if kind == "flatten":
        return (int(np.prod(shape)),)
    if kind == "softmax":
        if len(shape) != 1:
            raise ModelFormatError(f"softmax needs 1-D input, got {shape}")
        return shape
    if kind == "dense":
        if layer.weight is None or layer.bias is None:
            raise ModelFormatError("dense layer missing weight/bias")
        if len(shape) != 1:
            raise ModelFormatError(f"dense needs 1-D input, got {shape}")
        n_in, n_out = layer.weight.shape
        if n_in != shape[0]:
            raise ModelFormatError(f"weight expects {n_in} inputs, got {shape[0]}")
        if layer.bias.shape != (n_out,):
            raise ModelFormatError(f"bias shape {layer.bias.shape} != ({n_out},)")
        return (n_out,)
    if kind == "conv2d":
        if layer.kernel is None or layer.bias is None:
            raise ModelFormatError("conv2d layer missing kernel/bias")
        if len(shape) != 3:
            raise ModelFormatError(f"conv2d needs [H, W, C] input, got {shape}")
        kh, kw, c_in, c_out = layer.kernel.shape
        if c_in != shape[2]:
            raise ModelFormatError(f"kernel expects {c_in} input channels, got {shape[2]}")
        if layer.bias.shape != (c_out,):
            raise ModelFormatError(f"bias shape {layer.bias.shape} != ({c_out},)")
        sh, sw = layer.stride
        if layer.padding == "same":
            oh = -(-shape[0] // sh)
            ow = -(-shape[1] // sw)
        elif layer.padding == "valid":
            if shape[0] < kh or shape[1] < kw:
                raise ModelFormatError(f"kernel {kh}x{kw} larger than input {shape[:2]}")
            oh = (shape[0] - kh) // sh + 1
            ow = (shape[1] - kw) // sw + 1
        else:
            raise ModelFormatError(f"unknown padding {layer.padding!r}")
        return (oh, ow, c_out)
    if kind in ("maxpool2d", "avgpool2d"):
        if len(shape) != 3:
            raise ModelFormatError(f"pooling needs [H, W, C] input, got {shape}")
        ph, pw = layer.window
        sh, sw = layer.stride
        if shape[0] < ph or shape[1] < pw:
            raise ModelFormatError(f"window {ph}x{pw} larger than input {shape[:2]}")
        return ((shape[0] - ph) // sh + 1, (shape[1] - pw) // sw + 1, shape[2])
    raise ModelFormatError(f"unknown layer kind {kind!r}")


# ---------------------------------------------------------------------------
# Forward pass


def _same_padding(size: int, k: int, s: int) -> tuple[int, int]:
    out = -(-size // s)
    pad = max((out - 1) * s + k - size, 0)
    return pad // 2, pad - pad // 2


def _apply_layer(x: np.ndarray, layer: Layer) -> np.ndarray:
    kind = layer.kind
    if kind == "relu":
        return np.maximum(x, np.float32(0.0))
    if kind == "flatten":
        return np.ascontiguousarray(x).reshape(-1)
    if kind == "softmax":
        e = np.exp(x - x.max())
        return e / e.sum()
    if kind == "dense":
        return x @ layer.weight + layer.bias
    if kind == "conv2d":
        kh, kw, c_in, c_out = layer.kernel.shape
        sh, sw = layer.stride
        if layer.padding == "same":
            (pt, pb) = _same_padding(x.shape[0], kh, sh)
            (pl, pr) = _same_padding(x.shape[1], kw, sw)
            if pt or pb or pl or pr:
                x = np.pad(x, ((pt, pb), (pl, pr), (0, 0)))
        win = sliding_window_view(x, (kh, kw), axis=(0, 1))[::sh, ::sw]
        oh, ow = win.shape[:2]
        cols = win.transpose(0, 1, 3, 4, 2).reshape(oh * ow, kh * kw * c_in)
        out = cols @ layer.kernel.reshape(kh * kw * c_in, c_out) + layer.bias
        return out.reshape(oh, ow, c_out)
    if kind in ("maxpool2d", "avgpool2d"):
        ph, pw = layer.window
        sh, sw = layer.stride
        win = sliding_window_view(x, (ph, pw), axis=(0, 1))[::sh, ::sw]
        if kind == "maxpool2d":
            return win.max(axis=(3, 4))
        return win.mean(axis=(3, 4), dtype=np.float32)
    raise ModelFormatError(f"unknown layer kind {kind!r}")


def _prepare_input(model: Model, image: np.ndarray) -> np.ndarray:
    x = np.asarray(image)
    if tuple(x.shape) != model.input_shape:
        raise ValueError(f"input shape {x.shape} != model input {model.input_shape}")
    if x.dtype == np.uint8:
        return x.astype(np.float32) / np.float32(255.0)
    return x.astype(np.float32, copy=False)


def _forward_single(model: Model, x: np.ndarray) -> ActivationTrace:
    outs = []
    cur = x
    for layer in model.layers:
        cur = _apply_layer(cur, layer)
        outs.append(cur)
    parts = []
    for i, _, _ in model.neuron_layout:
        src = outs[i]
        if i + 1 < len(model.layers) and model.layers[i + 1].kind in _ACTIVATION_KINDS:
            src = outs[i + 1]
        if model.layers[i].kind == "conv2d":
            parts.append(src.mean(axis=(0, 1), dtype=np.float32))
        else:
            parts.append(src)
    values = np.concatenate(parts) if parts else np.zeros(0, dtype=np.float32)
    output = outs[-1].reshape(-1)
    # ties broken by lowest class id (np.argmax returns the first maximum)
    return ActivationTrace(values, int(np.argmax(output)), output, model.neuron_layout)


def forward_with_trace(model: Model, batch: list[np.ndarray]) -> list[ActivationTrace]:
    """Run a batch of inputs, returning one ActivationTrace per input in order.

    u8 inputs are scaled to [0, 1]; float inputs pass through unscaled.
    Each input is evaluated independently, so results are bit-identical
    regardless of how a workload is partitioned into batches.
    """
    return [_forward_single(model, _prepare_input(model, img)) for img in batch]


def predict_labels(model: Model, batch: list[np.ndarray]) -> list[int]:
    """Argmax labels only (cheaper than a full trace, same forward math)."""
    labels = []
    for img in batch:
        x = _prepare_input(model, img)
        for layer in model.layers:
            x = _apply_layer(x, layer)
        labels.append(int(np.argmax(x.reshape(-1))))
    return labels


def neuron_values(trace: ActivationTrace, layer: int) -> np.ndarray:
    """Neuron values of one neuron-bearing layer from a trace."""
    for idx, start, stop in trace.layout:
        if idx == layer:
            return trace.values[start:stop]
    raise ValueError(f"layer {layer} is not a neuron-bearing layer")


# ---------------------------------------------------------------------------
# Quantization


def truncate_to_half(values: np.ndarray) -> np.ndarray:
    """Round-trip f32 values through IEEE 754 binary16 (round-to-nearest-even).

    Values beyond the binary16 range become inf, as IEEE prescribes.
    """
    with np.errstate(over="ignore"):
        return values.astype(np.float16).astype(np.float32)


def quantize_model(model: Model, ratio: float, rng_seed: int) -> Model:
    """Return a copy with a random fraction of weight scalars truncated to f16.

    The fraction is selected by a seeded RNG over the flattened index
    space of all weight scalars (kernels, dense weights, biases) in layer
    order. The input model is left unmodified.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must be in [0, 1], got {ratio}")
    params = [(layer, name, arr) for layer in model.layers for name, arr in layer.param_arrays()]
    total = sum(arr.size for _, _, arr in params)
    count = int(round(ratio * total))
    mask = np.zeros(total, dtype=bool)
    if count:
        rng = np.random.default_rng(rng_seed)
        mask[rng.choice(total, size=count, replace=False)] = True
    new_layers = []
    offset = 0
    replacements: dict[int, np.ndarray] = {}
    for layer, name, arr in params:
        m = mask[offset : offset + arr.size].reshape(arr.shape)
        offset += arr.size
        new = arr.copy()
        if m.any():
            new[m] = truncate_to_half(new[m])
        replacements[id(arr)] = new
    for layer in model.layers:
        kwargs = dict(
            kind=layer.kind,
            stride=layer.stride,
            padding=layer.padding,
            window=layer.window,
        )
        for name, arr in layer.param_arrays():
            kwargs[name] = replacements[id(arr)]
        new_layers.append(Layer(**kwargs))
    return Model(model.input_shape, new_layers)


# ---------------------------------------------------------------------------
# Serialization

_STRIDE_KINDS = ("conv2d", "maxpool2d", "avgpool2d")


def save_model(model: Model, directory: str | Path) -> Path:
    """Write model.json + weights.bin into ``directory``; returns manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    layers_json = []
    for layer in model.layers:
        entry: dict = {"kind": layer.kind}
        if layer.kind in _STRIDE_KINDS:
            entry["stride"] = list(layer.stride)
        if layer.kind == "conv2d":
            entry["padding"] = layer.padding
            entry["kernel_shape"] = list(layer.kernel.shape)
        if layer.kind in ("maxpool2d", "avgpool2d"):
            entry["window"] = list(layer.window)
        if layer.kind == "dense":
            entry["weight_shape"] = list(layer.weight.shape)
        for name, arr in layer.param_arrays():
            entry[f"{name}_offset"] = len(blob)
            blob.extend(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        layers_json.append(entry)
    manifest = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "input_shape": list(model.input_shape),
        "weights_file": "weights.bin",
        "weights_sha256": hashlib.sha256(bytes(blob)).hexdigest(),
        "layers": layers_json,
    }
    (directory / "weights.bin").write_bytes(bytes(blob))
    path = directory / "model.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _read_param(blob: bytes, offset: int, shape: tuple[int, ...], i: int, name: str) -> np.ndarray:
    n = int(np.prod(shape))
    if offset < 0 or offset + 4 * n > len(blob):
        raise ModelFormatError(
            f"layer {i}: truncated weight blob ({name} needs {4 * n} bytes at offset {offset}, "
            f"blob is {len(blob)} bytes)"
        )
    return np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape).copy()


def load_model(path: str | Path) -> Model:
    """Load a model from a directory (or model.json path) and validate it."""
    path = Path(path)
    manifest_path = path / "model.json" if path.is_dir() else path
    if not manifest_path.exists():
        raise ModelFormatError(f"{manifest_path}: no such model manifest")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{manifest_path}: malformed manifest: {exc}") from None
    if manifest.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{manifest_path}: not a {MODEL_FORMAT} manifest")
    if manifest.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"{manifest_path}: unsupported version {manifest.get('version')}")
    blob_path = manifest_path.parent / manifest.get("weights_file", "weights.bin")
    if not blob_path.exists():
        raise ModelFormatError(f"{blob_path}: weight blob missing")
    blob = blob_path.read_bytes()
    digest = manifest.get("weights_sha256")
    if digest and hashlib.sha256(blob).hexdigest() != digest:
        raise ModelFormatError(f"{blob_path}: weight blob checksum mismatch (stale blob?)")
    layers = []
    for i, entry in enumerate(manifest.get("layers", [])):
        kind = entry.get("kind")
        if kind not in LAYER_KINDS:
            raise ModelFormatError(f"layer {i}: unknown kind {kind!r}")
        try:
            layer = _layer_from_entry(entry, blob, i)
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"layer {i}: malformed manifest entry: {exc}") from None
        layers.append(layer)
    if "input_shape" not in manifest:
        raise ModelFormatError(f"{manifest_path}: missing input_shape")
    return Model(tuple(manifest["input_shape"]), layers)


def _layer_from_entry(entry: dict, blob: bytes, i: int) -> Layer:
    kind = entry["kind"]
    if kind == "conv2d":
        shape = tuple(entry["kernel_shape"])
        if len(shape) != 4:
            raise ModelFormatError(f"layer {i}: kernel_shape must have 4 dims, got {shape}")
        kernel = _read_param(blob, entry["kernel_offset"], shape, i, "kernel")
        if "bias_offset" in entry:
            bias = _read_param(blob, entry["bias_offset"], (shape[3],), i, "bias")
        else:
            bias = np.zeros(shape[3], dtype=np.float32)  # bias-less source layer
        return Layer(
            kind,
            kernel=kernel,
            bias=bias,
            stride=tuple(entry["stride"]),
            padding=entry["padding"],
        )
    if kind == "dense":
        shape = tuple(entry["weight_shape"])
        if len(shape) != 2:
            raise ModelFormatError(f"layer {i}: weight_shape must have 2 dims, got {shape}")
        weight = _read_param(blob, entry["weight_offset"], shape, i, "weight")
        if "bias_offset" in entry:
            bias = _read_param(blob, entry["bias_offset"], (shape[1],), i, "bias")
        else:
            bias = np.zeros(shape[1], dtype=np.float32)
        return Layer(kind, weight=weight, bias=bias)
    if kind in ("maxpool2d", "avgpool2d"):
        window = tuple(entry["window"])
        stride = tuple(entry.get("stride", window))
        return Layer(kind, window=window, stride=stride)
    return Layer(kind)
