"""Convert Keras models (the engine's supported layer subset) into the
engine's model.json + weights.bin format, and emit golden forward-pass
fixtures computed by Keras itself.

Layers are matched by class name, so no TensorFlow import happens here;
any layer outside the supported subset aborts the export with the layer
named. Keras conv kernels are already stored [kh][kw][in][out], which is
the engine's on-disk layout; the exporter asserts that instead of
transposing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

ENGINE_FORMAT = "nf-model"
ENGINE_VERSION = 1

_SUPPORTED = (
    "InputLayer",
    "Conv2D",
    "Dense",
    "MaxPooling2D",
    "AveragePooling2D",
    "Flatten",
    "ReLU",
    "Softmax",
    "Activation",
)


class UnsupportedLayerError(ValueError):
    """Raised when a source layer cannot be expressed in the engine format."""


@dataclass
class ExportManifest:
    source_model: str
    layer_map: list[dict] = field(default_factory=list)
    files: dict = field(default_factory=dict)
    weights_sha256: str = ""


class _BlobWriter:
    def __init__(self):
        self.data = bytearray()

    def append(self, array: np.ndarray) -> int:
        offset = len(self.data)
        self.data.extend(np.ascontiguousarray(array, dtype="<f4").tobytes())
        return offset


def _activation_name(layer) -> str:
    activation = getattr(layer, "activation", None)
    if activation is None:
        return "linear"
    return getattr(activation, "__name__", str(activation))


def _emit_activation(name: str, source: str, entries: list, kinds: list) -> None:
    if name == "linear":
        return
    if name == "relu":
        entries.append({"kind": "relu"})
        kinds.append("relu")
    elif name == "softmax":
        entries.append({"kind": "softmax"})
        kinds.append("softmax")
    else:
        raise UnsupportedLayerError(f"layer {source}: unsupported activation {name!r}")


def _pair(value) -> list[int]:
    if isinstance(value, int):
        return [value, value]
    return [int(value[0]), int(value[1])]


def _export_conv(layer, blob, entries, kinds):
    if getattr(layer, "data_format", "channels_last") != "channels_last":
        raise UnsupportedLayerError(f"layer {layer.name}: data_format must be channels_last")
    if _pair(getattr(layer, "dilation_rate", 1)) != [1, 1]:
        raise UnsupportedLayerError(f"layer {layer.name}: dilation is unsupported")
    if getattr(layer, "groups", 1) != 1:
        raise UnsupportedLayerError(f"layer {layer.name}: grouped conv is unsupported")
    padding = layer.padding
    if padding not in ("same", "valid"):
        raise UnsupportedLayerError(f"layer {layer.name}: padding {padding!r} unsupported")
    weights = layer.get_weights()
    kernel = weights[0]
    # Keras kernels are [kh][kw][in][out], exactly the engine layout
    assert kernel.ndim == 4 and kernel.shape[3] == layer.filters
    entry = {
        "kind": "conv2d",
        "kernel_shape": list(kernel.shape),
        "stride": _pair(layer.strides),
        "padding": padding,
        "kernel_offset": blob.append(kernel),
    }
    if layer.use_bias:
        entry["bias_offset"] = blob.append(weights[1])
    entries.append(entry)
    kinds.append("conv2d")
    _emit_activation(_activation_name(layer), layer.name, entries, kinds)


def _export_dense(layer, blob, entries, kinds):
    weights = layer.get_weights()
    weight = weights[0]
    entry = {
        "kind": "dense",
        "weight_shape": list(weight.shape),
        "weight_offset": blob.append(weight),
    }
    if layer.use_bias:
        entry["bias_offset"] = blob.append(weights[1])
    entries.append(entry)
    kinds.append("dense")
    _emit_activation(_activation_name(layer), layer.name, entries, kinds)


def _export_pool(layer, kind, entries, kinds):
    if layer.padding != "valid":
        raise UnsupportedLayerError(f"layer {layer.name}: only valid pooling is supported")
    window = _pair(layer.pool_size)
    stride = _pair(layer.strides) if layer.strides is not None else window
    entries.append({"kind": kind, "window": window, "stride": stride})
    kinds.append(kind)


def export_model(model, out_dir: str | Path) -> ExportManifest:
    """Write model.json + weights.bin for a Keras model; returns the manifest.

    Aborts with UnsupportedLayerError (naming the layer) on anything
    outside the supported subset.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for layer in model.layers:
        cls = layer.__class__.__name__
        if cls not in _SUPPORTED:
            raise UnsupportedLayerError(f"unsupported layer {layer.name!r} ({cls})")
    input_shape = tuple(int(d) for d in model.input_shape[1:])
    blob = _BlobWriter()
    entries: list[dict] = []
    manifest = ExportManifest(source_model=getattr(model, "name", "model"))
    if len(input_shape) == 1:
        # flat input: engine images are [H, W, C], so present it as [1, 1, n]
        input_shape = (1, 1, input_shape[0])
        entries.append({"kind": "flatten"})
        manifest.layer_map.append({"source": "(input)", "kinds": ["flatten"]})
    elif len(input_shape) != 3:
        raise UnsupportedLayerError(f"unsupported input rank {len(input_shape) + 1}")

    for layer in model.layers:
        cls = layer.__class__.__name__
        kinds: list[str] = []
        if cls == "InputLayer":
            pass
        elif cls == "Conv2D":
            _export_conv(layer, blob, entries, kinds)
        elif cls == "Dense":
            _export_dense(layer, blob, entries, kinds)
        elif cls == "MaxPooling2D":
            _export_pool(layer, "maxpool2d", entries, kinds)
        elif cls == "AveragePooling2D":
            _export_pool(layer, "avgpool2d", entries, kinds)
        elif cls == "Flatten":
            entries.append({"kind": "flatten"})
            kinds.append("flatten")
        elif cls == "ReLU":
            if getattr(layer, "max_value", None) or getattr(layer, "negative_slope", 0.0):
                raise UnsupportedLayerError(f"layer {layer.name}: parameterized relu unsupported")
            entries.append({"kind": "relu"})
            kinds.append("relu")
        elif cls == "Softmax":
            entries.append({"kind": "softmax"})
            kinds.append("softmax")
        elif cls == "Activation":
            _emit_activation(_activation_name(layer), layer.name, entries, kinds)
        if kinds:
            manifest.layer_map.append({"source": layer.name, "kinds": kinds})

    softmax_positions = [i for i, e in enumerate(entries) if e["kind"] == "softmax"]
    if softmax_positions and softmax_positions != [len(entries) - 1]:
        raise UnsupportedLayerError("softmax is only supported as the final layer")

    digest = hashlib.sha256(bytes(blob.data)).hexdigest()
    model_json = {
        "format": ENGINE_FORMAT,
        "version": ENGINE_VERSION,
        "input_shape": list(input_shape),
        "weights_file": "weights.bin",
        "weights_sha256": digest,
        "layers": entries,
    }
    (out / "weights.bin").write_bytes(bytes(blob.data))
    (out / "model.json").write_text(json.dumps(model_json, indent=2) + "\n")
    manifest.files = {
        "model": str(out / "model.json"),
        "weights": str(out / "weights.bin"),
    }
    manifest.weights_sha256 = digest
    (out / "export_manifest.json").write_text(json.dumps(asdict(manifest), indent=2) + "\n")
    return manifest


def export_golden(model, out_dir: str | Path, count: int = 100, rng_seed: int = 0) -> Path:
    """Emit seeded random u8 inputs plus the source framework's outputs.

    Writes ``golden/`` netpbm inputs and ``golden.json`` mapping each
    input file to the Keras forward output (computed on inputs scaled
    by 1/255, matching the engine's u8 handling).
    """
    from nnexport.dataset_export import to_u8_image, write_netpbm

    out = Path(out_dir)
    golden_dir = out / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    shape = tuple(int(d) for d in model.input_shape[1:])
    if len(shape) != 3 or shape[2] not in (1, 3):
        raise UnsupportedLayerError(f"golden emission needs [H, W, 1|3] inputs, got {shape}")
    rng = np.random.default_rng(rng_seed)
    images = rng.integers(0, 256, (count,) + shape, dtype=np.uint8)
    outputs = model.predict(images.astype(np.float32) / 255.0, verbose=0)
    records = {}
    for i in range(count):
        u8 = to_u8_image(images[i])
        name = f"in_{i:05d}.{'pgm' if u8.shape[2] == 1 else 'ppm'}"
        write_netpbm(golden_dir / name, u8)
        records[name] = {"output": [float(v) for v in outputs[i].reshape(-1)]}
    path = out / "golden.json"
    path.write_text(json.dumps({"rng_seed": rng_seed, "outputs": records}, indent=2) + "\n")
    return path
