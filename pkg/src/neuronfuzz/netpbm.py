"""Binary netpbm (P5/P6, maxval 255) image I/O and corpus loading.

A corpus directory holds one image file per test input plus a label
manifest: either ``labels.csv`` with ``filename,class_id`` lines, or a
``meta.jsonl`` written by a fuzz run (one JSON object per line with at
least ``file`` and ``label`` fields).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class NetpbmError(ValueError):
    pass


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments between header tokens
    while pos < len(data):
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(data) and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise NetpbmError("unexpected end of header")
    return data[start:pos], pos


def read_image(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file into a u8 [H, W, C] array."""
    data = Path(path).read_bytes()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported magic {magic!r} (need P5 or P6)")
    channels = 1 if magic == b"P5" else 3
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise NetpbmError(f"{path}: malformed header token {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise NetpbmError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    n = width * height * channels
    raster = data[pos : pos + n]
    if len(raster) != n:
        raise NetpbmError(f"{path}: truncated raster ({len(raster)} of {n} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels).copy()


def write_image(path: str | Path, image: np.ndarray) -> None:
    """Write a u8 [H, W, C] array as P5 (C=1) or P6 (C=3)."""
    if image.ndim != 3 or image.dtype != np.uint8:
        raise NetpbmError(f"expected u8 [H, W, C] array, got {image.dtype} {image.shape}")
    h, w, c = image.shape
    if c == 1:
        magic = b"P5"
    elif c == 3:
        magic = b"P6"
    else:
        raise NetpbmError(f"unsupported channel count {c} (need 1 or 3)")
    header = magic + b"\n" + f"{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def load_corpus(directory: str | Path) -> tuple[list[np.ndarray], list[int], list[str]]:
    """Load a corpus directory: returns (images, labels, filenames) in manifest order.

    Accepts a ``labels.csv`` manifest or a fuzz run's ``meta.jsonl``.
    """
    directory = Path(directory)
    csv_path = directory / "labels.csv"
    jsonl_path = directory / "meta.jsonl"
    entries: list[tuple[str, int]] = []
    if csv_path.exists():
        with open(csv_path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                entries.append((row[0], int(row[1])))
    elif jsonl_path.exists():
        with open(jsonl_path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries.append((rec["file"], int(rec["label"])))
    else:
        raise NetpbmError(f"{directory}: empty dataset (no labels.csv or meta.jsonl manifest)")
    if not entries:
        raise NetpbmError(f"{directory}: empty dataset")
    images, labels, names = [], [], []
    for name, label in entries:
        images.append(read_image(directory / name))
        labels.append(label)
        names.append(name)
    return images, labels, names
