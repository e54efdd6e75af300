"""Minimal deterministic PNG (8-bit RGB) and PGM (16-bit) readers/writers.

Only the subset this project produces is supported: truecolor PNGs written
with filter type 0 on every scanline, and binary P5 PGMs with maxval 65535.
Depth images store 0.1 mm units; heatmaps store round(q * 65535).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

DEPTH_UNIT = 1e-4           # meters per PGM depth count
HEATMAP_SCALE = 65535


class ImageFormatError(ValueError):
    pass


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def write_png_rgb(path, rgb01: np.ndarray) -> None:
    """Write an [H, W, 3] float image in [0, 1] as an 8-bit truecolor PNG."""
    if rgb01.ndim != 3 or rgb01.shape[2] != 3:
        raise ImageFormatError(f"expected [H, W, 3], got {rgb01.shape}")
    h, w, _ = rgb01.shape
    u8 = np.round(np.clip(rgb01, 0.0, 1.0) * 255.0).astype(np.uint8)
    raw = bytearray()
    for row in u8:
        raw.append(0)                     # filter type 0 on every scanline
        raw.extend(row.tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    data = (_PNG_MAGIC + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(bytes(raw), 6))
            + _chunk(b"IEND", b""))
    with open(path, "wb") as f:
        f.write(data)


def read_png_rgb(path) -> np.ndarray:
    """Read a PNG written by :func:`write_png_rgb`; returns floats in [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(_PNG_MAGIC):
        raise ImageFormatError(f"{path}: not a PNG file")
    pos = len(_PNG_MAGIC)
    width = height = None
    idat = bytearray()
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, color, comp, filt, inter = struct.unpack(
                ">IIBBBBB", payload)
            if depth != 8 or color != 2 or inter != 0:
                raise ImageFormatError(f"{path}: unsupported PNG variant")
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if width is None:
        raise ImageFormatError(f"{path}: missing IHDR")
    raw = zlib.decompress(bytes(idat))
    stride = width * 3 + 1
    if len(raw) != stride * height:
        raise ImageFormatError(f"{path}: truncated image data")
    rows = []
    for r in range(height):
        line = raw[r * stride:(r + 1) * stride]
        if line[0] != 0:
            raise ImageFormatError(f"{path}: unsupported PNG filter {line[0]}")
        rows.append(np.frombuffer(line[1:], dtype=np.uint8))
    return np.stack(rows).reshape(height, width, 3).astype(np.float64) / 255.0


def write_pgm16(path, values: np.ndarray) -> None:
    """Write an [H, W] uint16 array as a binary (P5) PGM, maxval 65535."""
    if values.ndim != 2:
        raise ImageFormatError(f"expected [H, W], got {values.shape}")
    arr = values.astype(">u2")
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header + arr.tobytes())


def read_pgm16(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"65535":
        raise ImageFormatError(f"{path}: not a 16-bit P5 PGM")
    w, h = (int(x) for x in parts[1].split())
    data = np.frombuffer(parts[3][:w * h * 2], dtype=">u2")
    if data.size != w * h:
        raise ImageFormatError(f"{path}: truncated PGM data")
    return data.reshape(h, w).astype(np.uint16)


def write_depth_pgm(path, depth_m: np.ndarray) -> None:
    counts = np.round(depth_m / DEPTH_UNIT)
    if counts.min() < 0 or counts.max() > 65535:
        raise ImageFormatError("depth outside the 0 .. 6.5535 m PGM range")
    write_pgm16(path, counts.astype(np.uint16))


def read_depth_pgm(path) -> np.ndarray:
    return read_pgm16(path).astype(np.float64) * DEPTH_UNIT


def write_heatmap_pgm(path, q: np.ndarray) -> None:
    write_pgm16(path, np.round(np.clip(q, 0.0, 1.0) * HEATMAP_SCALE).astype(np.uint16))


def read_heatmap_pgm(path) -> np.ndarray:
    return read_pgm16(path).astype(np.float64) / HEATMAP_SCALE
