"""Point cloud file formats.

Two interchangeable encodings:
  * XYZ text: one 'x y z' per line, space separated, plain decimal notation.
  * Binary: an 8-byte little-endian unsigned count, then count * 3 (or * 4)
    little-endian float32 values.
Labeled clouds add the {0, 1} label as a fourth column/channel.
"""

from __future__ import annotations

import struct

import numpy as np


def save_cloud_xyz(path, points: np.ndarray, labels: np.ndarray | None = None) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if labels is not None and len(labels) != len(points):
        raise ValueError("labels length must match point count")
    with open(path, "w", encoding="utf-8") as handle:
        for i, p in enumerate(points):
            row = " ".join(_fmt(v) for v in p)
            if labels is not None:
                row += f" {int(labels[i])}"
            handle.write(row + "\n")


def _fmt(value: float) -> str:
    return np.format_float_positional(float(value), unique=True, trim="0")


def load_cloud_xyz(path):
    """Read an XYZ file; returns (points, labels) with labels None for 3-column files."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 columns, got {len(tokens)}")
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise ValueError(f"{path}:{lineno}: inconsistent column count")
            try:
                rows.append([float(t) for t in tokens])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise ValueError(f"{path}: empty point cloud file")
    data = np.array(rows, dtype=np.float64)
    if width == 3:
        return data, None
    return data[:, :3], data[:, 3].astype(np.int64)


def save_cloud_bin(path, points: np.ndarray, labels: np.ndarray | None = None) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if labels is not None:
        if len(labels) != len(points):
            raise ValueError("labels length must match point count")
        payload = np.hstack([points, np.asarray(labels, dtype=np.float64).reshape(-1, 1)])
    else:
        payload = points
    with open(path, "wb") as handle:
        handle.write(struct.pack("<Q", len(points)))
        handle.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())


def load_cloud_bin(path):
    """Read a binary cloud; channel count (3 or 4) is inferred from the payload size."""
    with open(path, "rb") as handle:
        header = handle.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated header")
        (count,) = struct.unpack("<Q", header)
        payload = handle.read()
    for channels in (3, 4):
        if len(payload) == count * channels * 4:
            data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, channels)
            if channels == 3:
                return data, None
            return data[:, :3], data[:, 3].astype(np.int64)
    raise ValueError(
        f"{path}: payload of {len(payload)} bytes does not match {count} points with 3 or 4 channels"
    )
