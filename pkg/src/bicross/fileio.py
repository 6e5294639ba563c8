"""Small binary file formats used across the pipeline.

Everything here is little-endian and dependency-free so a second
implementation can reproduce the bytes exactly: binary PGM/PPM images,
raw float32 depth grids with an (H, W) header, and raw float32 luminance
sequences with a (T, H, W) header.
"""

from __future__ import annotations

import os
import re
import struct

import numpy as np

from .errors import FormatError, InvalidInputError

_DEPTH_HEADER = struct.Struct("<II")
_LUM_HEADER = struct.Struct("<III")


def write_pgm(image: np.ndarray, path: str | os.PathLike) -> None:
    """Write an 8-bit grayscale image as binary PGM (P5)."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise InvalidInputError(f"PGM wants a 2-D uint8 array, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def write_ppm(image: np.ndarray, path: str | os.PathLike) -> None:
    """Write an 8-bit RGB image as binary PPM (P6)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise InvalidInputError(f"PPM wants an (H, W, 3) uint8 array, got {image.dtype} {image.shape}")
    h, w, _ = image.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def _read_pnm(path: str | os.PathLike, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    # header: magic, whitespace-separated width/height/maxval, one whitespace byte
    m = re.match(rb"(P[56])\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None or m.group(1) != magic:
        raise FormatError(f"not a {magic.decode()} file: {path}", offset=0)
    w, h, maxval = int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}", offset=m.start(4))
    data = raw[m.end() :]
    need = w * h * channels
    if len(data) != need:
        raise FormatError(f"pixel payload has {len(data)} bytes, expected {need}", offset=m.end())
    arr = np.frombuffer(data, dtype=np.uint8)
    shape = (h, w) if channels == 1 else (h, w, channels)
    return arr.reshape(shape)


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    return _read_pnm(path, b"P5", 1)


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    return _read_pnm(path, b"P6", 3)


def write_depth(depth: np.ndarray, path: str | os.PathLike) -> None:
    """Write a depth grid as (H u32, W u32) header + row-major float32 LE payload."""
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise InvalidInputError(f"depth must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(_DEPTH_HEADER.pack(h, w))
        f.write(depth.astype("<f4").tobytes())


def read_depth(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _DEPTH_HEADER.size:
        raise FormatError("truncated depth header", offset=len(raw))
    h, w = _DEPTH_HEADER.unpack_from(raw, 0)
    need = h * w * 4
    payload = raw[_DEPTH_HEADER.size :]
    if len(payload) != need:
        raise FormatError(f"depth payload has {len(payload)} bytes, expected {need}", offset=_DEPTH_HEADER.size)
    return np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float64)


def write_lum(frames: np.ndarray, path: str | os.PathLike) -> None:
    """Write a luminance sequence as (T, H, W u32) header + float32 LE payload."""
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3:
        raise InvalidInputError(f"luminance must be (T, H, W), got shape {frames.shape}")
    t, h, w = frames.shape
    with open(path, "wb") as f:
        f.write(_LUM_HEADER.pack(t, h, w))
        f.write(frames.astype("<f4").tobytes())


def read_lum(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _LUM_HEADER.size:
        raise FormatError("truncated luminance header", offset=len(raw))
    t, h, w = _LUM_HEADER.unpack_from(raw, 0)
    need = t * h * w * 4
    payload = raw[_LUM_HEADER.size :]
    if len(payload) != need:
        raise FormatError(f"luminance payload has {len(payload)} bytes, expected {need}", offset=_LUM_HEADER.size)
    return np.frombuffer(payload, dtype="<f4").reshape(t, h, w).astype(np.float64)
