"""Binary PGM (P5) and PPM (P6) reading and writing, 8-bit only."""

from __future__ import annotations

import os

import numpy as np

MAXVAL = 255


class PNMFormatError(ValueError):
    pass


def _read_header(buf: bytes, magic: bytes) -> tuple[int, int, int, int]:
    """Returns (width, height, maxval, payload offset)."""
    if buf[:2] != magic:
        raise PNMFormatError(f"expected magic {magic!r}, found {buf[:2]!r}")
    fields: list[int] = []
    pos = 2
    n = len(buf)
    while len(fields) < 3:
        # whitespace and comments between header tokens
        while pos < n and (buf[pos : pos + 1].isspace() or buf[pos : pos + 1] == b"#"):
            if buf[pos : pos + 1] == b"#":
                end = buf.find(b"\n", pos)
                pos = n if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < n and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise PNMFormatError("malformed header: expected an integer field")
        fields.append(int(buf[start:pos]))
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise PNMFormatError("malformed header: missing whitespace before the payload")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PNMFormatError(f"bad dimensions {width}x{height}")
    if maxval != MAXVAL:
        raise PNMFormatError(f"only maxval {MAXVAL} is supported, got {maxval}")
    return width, height, maxval, pos + 1


def read_pgm_bytes(buf: bytes) -> np.ndarray:
    width, height, _, off = _read_header(buf, b"P5")
    payload = buf[off : off + width * height]
    if len(payload) < width * height:
        raise PNMFormatError(f"truncated payload: {len(payload)} of {width * height} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def read_pgm(path: str | os.PathLike, kind: str = "image") -> np.ndarray:
    """Images come back as float32 in [0, 1]; masks as raw uint8 class indices."""
    with open(path, "rb") as fh:
        raw = read_pgm_bytes(fh.read())
    if kind == "image":
        return raw.astype(np.float32) / np.float32(MAXVAL)
    if kind == "mask":
        return raw
    raise ValueError(f"kind must be 'image' or 'mask', got {kind!r}")


def quantize(image: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    return np.rint(np.clip(x, 0.0, 1.0) * MAXVAL).astype(np.uint8)


def pgm_bytes(array: np.ndarray, kind: str = "image") -> bytes:
    a = np.asarray(array)
    if a.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {a.shape}")
    if kind == "image":
        data = quantize(a)
    elif kind == "mask":
        if a.size and (a.min() < 0 or a.max() > MAXVAL):
            raise ValueError("mask values must lie in [0, 255]")
        data = a.astype(np.uint8)
    else:
        raise ValueError(f"kind must be 'image' or 'mask', got {kind!r}")
    h, w = data.shape
    return f"P5\n{w} {h}\n{MAXVAL}\n".encode("ascii") + data.tobytes()


def write_pgm(path: str | os.PathLike, array: np.ndarray, kind: str = "image") -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(array, kind))


def write_ppm(path: str | os.PathLike, rgb: np.ndarray) -> None:
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ValueError("PPM needs an (H, W, 3) uint8 array")
    h, w, _ = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n{MAXVAL}\n".encode("ascii") + a.tobytes())


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    width, height, _, off = _read_header(buf, b"P6")
    payload = buf[off : off + 3 * width * height]
    if len(payload) < 3 * width * height:
        raise PNMFormatError("truncated payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy()
