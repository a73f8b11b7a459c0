"""Binary tensor/plan containers and PNG import/export.

Formats (all little-endian):
  TNSR  "TNSR" | u32 rank | rank x u32 dims | prod(dims) x f32, row-major
  SPLN  "SPLN" | u32 H | u32 W | u32 L | L x (u32 row, u32 col)
  checkpoint  u32 count | count x (u16 name_len, name bytes, u64 offset)
              followed by concatenated TNSR payloads; offsets are absolute.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

TNSR_MAGIC = b"TNSR"
SPLN_MAGIC = b"SPLN"


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    head = TNSR_MAGIC + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one TNSR record; returns (array, next offset)."""
    if buf[offset:offset + 4] != TNSR_MAGIC:
        raise DataError("bad TNSR magic")
    rank = struct.unpack_from("<I", buf, offset + 4)[0]
    dims = struct.unpack_from(f"<{rank}I", buf, offset + 8)
    start = offset + 8 + 4 * rank
    n = int(np.prod(dims)) if rank else 1
    arr = np.frombuffer(buf, dtype="<f4", count=n, offset=start).reshape(dims)
    return arr.astype(np.float32), start + 4 * n


def save_tensor(path, arr: np.ndarray):
    Path(path).write_bytes(tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    arr, _ = tensor_from_bytes(Path(path).read_bytes())
    return arr


def save_plan(path, H: int, W: int, rows: np.ndarray, cols: np.ndarray):
    L = len(rows)
    buf = SPLN_MAGIC + struct.pack("<III", H, W, L)
    coords = np.empty((L, 2), dtype="<u4")
    coords[:, 0] = rows
    coords[:, 1] = cols
    Path(path).write_bytes(buf + coords.tobytes())


def load_plan(path) -> tuple[int, int, np.ndarray, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != SPLN_MAGIC:
        raise DataError("bad SPLN magic")
    H, W, L = struct.unpack_from("<III", buf, 4)
    coords = np.frombuffer(buf, dtype="<u4", count=2 * L, offset=16).reshape(L, 2)
    return H, W, coords[:, 0].astype(np.int64), coords[:, 1].astype(np.int64)


def save_checkpoint(path, params: dict[str, np.ndarray]):
    """Write named tensors; iteration order of `params` is preserved."""
    names = list(params)
    payloads = [tensor_to_bytes(params[n]) for n in names]
    header_len = 4 + sum(2 + len(n.encode()) + 8 for n in names)
    out = bytearray(struct.pack("<I", len(names)))
    offset = header_len
    for name, payload in zip(names, payloads):
        nb = name.encode()
        out += struct.pack("<H", len(nb)) + nb + struct.pack("<Q", offset)
        offset += len(payload)
    for payload in payloads:
        out += payload
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    count = struct.unpack_from("<I", buf, 0)[0]
    pos = 4
    entries = []
    for _ in range(count):
        nlen = struct.unpack_from("<H", buf, pos)[0]
        name = buf[pos + 2:pos + 2 + nlen].decode()
        off = struct.unpack_from("<Q", buf, pos + 2 + nlen)[0]
        entries.append((name, off))
        pos += 2 + nlen + 8
    out = {}
    for name, off in entries:
        arr, _ = tensor_from_bytes(buf, off)
        out[name] = arr
    return out


# -- images ---------------------------------------------------------------

def save_image(path, img: np.ndarray):
    """img: (3,H,W) or (H,W) in [0,1] -> 8-bit PNG."""
    arr = np.clip(img, 0.0, 1.0)
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8)).save(path)


def load_image(path) -> np.ndarray:
    """PNG -> (3,H,W) float32 in [0,1] (value/255)."""
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def save_heatmap(path, m: np.ndarray):
    """Per-map min-max normalized grayscale PNG."""
    lo, hi = float(m.min()), float(m.max())
    scale = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    save_image(path, scale)


def save_sampling_overlay(path, img: np.ndarray, rows: np.ndarray, cols: np.ndarray):
    """Blurred image with sampled pixels painted red."""
    rgb = np.clip(img, 0.0, 1.0).copy()
    if rgb.ndim == 2:
        rgb = np.stack([rgb] * 3)
    rgb[0, rows, cols] = 1.0
    rgb[1, rows, cols] = 0.0
    rgb[2, rows, cols] = 0.0
    save_image(path, rgb)
