"""Binary checkpoint container.

Layout: 4-byte magic, u32 version, u64 header length, UTF-8 JSON header, then
raw little-endian array payloads in manifest order. The header holds a
`meta` dict (architecture, config, progress counters) and the ordered
manifest of (name, shape, dtype) entries. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"PFCK"
VERSION = 1

_DTYPES = {"<f8": "<f8", "<f4": "<f4", "<i8": "<i8"}


def _wire_dtype(arr: np.ndarray) -> str:
    kind = arr.dtype.kind
    if kind == "f":
        return "<f8" if arr.dtype.itemsize == 8 else "<f4"
    if kind == "i":
        return "<i8"
    raise TypeError(f"unsupported checkpoint dtype {arr.dtype}")


def save_container(path, entries, meta: dict) -> None:
    """Write named arrays plus a JSON-serializable meta dict.

    `entries` is an ordered mapping or iterable of (name, array).
    """
    items = list(entries.items()) if hasattr(entries, "items") else list(entries)
    manifest = []
    payloads = []
    for name, arr in items:
        arr = np.asarray(arr)
        wire = _wire_dtype(arr)
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": wire})
        payloads.append(np.ascontiguousarray(arr, dtype=wire).tobytes())
    header = json.dumps({"meta": meta, "entries": manifest}).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        handle.write(struct.pack("<Q", len(header)))
        handle.write(header)
        for blob in payloads:
            handle.write(blob)


def load_container(path):
    """Read a checkpoint; returns (ordered dict of arrays, meta dict)."""
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", handle.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
        (header_len,) = struct.unpack("<Q", handle.read(8))
        header = handle.read(header_len)
        if len(header) != header_len:
            raise ValueError(f"{path}: truncated header")
        try:
            parsed = json.loads(header.decode("utf-8"))
            manifest = parsed["entries"]
            meta = parsed["meta"]
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}: corrupt manifest: {exc}") from None
        entries = {}
        for item in manifest:
            dtype = _DTYPES[item["dtype"]]
            shape = tuple(item["shape"])
            count = int(np.prod(shape)) if shape else 1
            blob = handle.read(count * np.dtype(dtype).itemsize)
            if len(blob) != count * np.dtype(dtype).itemsize:
                raise ValueError(f"{path}: truncated payload for entry {item['name']!r}")
            entries[item["name"]] = np.frombuffer(blob, dtype=dtype).reshape(shape).copy()
    return entries, meta


def module_state(module):
    """Ordered (name, array) state of a module: parameter values, optimizer
    moments and step counters, then buffers (e.g. batch norm running stats)."""
    out = []
    for name, p in module.named_params():
        out.append((f"{name}.value", p.value))
        out.append((f"{name}.m1", p.m1))
        out.append((f"{name}.m2", p.m2))
        out.append((f"{name}.step", np.array(p.step, dtype=np.int64)))
    for name, arr in module.named_buffers():
        out.append((name, arr))
    return out


def load_module_state(module, entries: dict) -> None:
    """Restore a module from `entries`, strictly: names and shapes must match."""
    expected = {name for name, _ in module_state(module)}
    provided = set(entries)
    if expected != provided:
        missing = sorted(expected - provided)
        extra = sorted(provided - expected)
        raise ValueError(f"checkpoint state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, p in module.named_params():
        for field in ("value", "m1", "m2"):
            arr = entries[f"{name}.{field}"]
            target = getattr(p, field)
            if arr.shape != target.shape:
                raise ValueError(f"shape mismatch for {name}.{field}: {arr.shape} vs {target.shape}")
            target[...] = arr.astype(target.dtype)
        p.step = int(entries[f"{name}.step"])
    for full, owner, local in module.buffer_slots():
        owner.set_local_buffer(local, entries[full])
