"""Write image datasets as binary netpbm corpora (P5/P6 + labels.csv).

The output is exactly the engine's corpus format: 8-bit maxval-255
images named in input order plus ``filename,class_id`` lines.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def to_u8_image(image: np.ndarray) -> np.ndarray:
    """Validate that an array is losslessly u8-representable; returns [H, W, C]."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected [H, W] or [H, W, 1|3] image, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr
    values = arr.astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("image contains non-finite values")
    if np.any(values < 0) or np.any(values > 255) or np.any(values != np.rint(values)):
        raise ValueError("image is not u8-representable (integers in [0, 255] required)")
    return values.astype(np.uint8)


def write_netpbm(path: str | Path, image: np.ndarray) -> None:
    h, w, c = image.shape
    magic = b"P5" if c == 1 else b"P6"
    header = magic + b"\n" + f"{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def read_netpbm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise ValueError(f"{path}: unsupported netpbm variant")
    c = 1 if magic == b"P5" else 3
    pos += 1
    raster = data[pos : pos + w * h * c]
    if len(raster) != w * h * c:
        raise ValueError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, c).copy()


def export_dataset(
    images, labels, out_dir: str | Path, count: int | None = None, prefix: str = "img"
) -> int:
    """Write images + labels.csv into ``out_dir``; returns the file count.

    Ordering is deterministic: input order, zero-padded names.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if count is not None:
        images = images[:count]
        labels = labels[:count]
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    lines = []
    for i, (image, label) in enumerate(zip(images, labels)):
        u8 = to_u8_image(image)
        name = f"{prefix}_{i:05d}.{'pgm' if u8.shape[2] == 1 else 'ppm'}"
        write_netpbm(out / name, u8)
        lines.append(f"{name},{int(label)}\n")
    (out / "labels.csv").write_text("".join(lines))
    return len(lines)
