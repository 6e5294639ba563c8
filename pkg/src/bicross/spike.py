"""Spike-camera simulation and the bit-packed .spk stream container.

A spike camera integrates per-pixel luminance over time and fires a one-bit
spike whenever the accumulated value crosses a threshold, after which the
accumulator is reset.  This module provides the reference simulator, linear
temporal upsampling of luminance, temporal binning of streams into model
input volumes, and a bit-exact binary container for spike streams.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InvalidInputError, InvalidParameterError

DEFAULT_THETA = 0.4
DEFAULT_FREQ_HZ = 1280.0

_SPK_MAGIC = b"SPK1"
_SPK_VERSION = 1
_SPK_HEADER = struct.Struct("<4sHIIIdd")  # magic, version, H, W, T, freq, theta
_U32_MAX = 0xFFFFFFFF


@dataclass(frozen=True)
class LuminanceSequence:
    """Time-sampled luminance grid, shape (T, H, W), values >= 0, dt seconds per step."""

    frames: np.ndarray
    dt: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[0] < 1:
            raise InvalidInputError(f"frames must be (T, H, W) with T >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError("luminance contains non-finite values")
        if frames.min(initial=0.0) < 0.0:
            raise InvalidInputError("luminance must be nonnegative")
        if not (self.dt > 0):
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "frames", frames)

    @property
    def t_lum(self) -> int:
        return self.frames.shape[0]

    @property
    def freq(self) -> float:
        return 1.0 / self.dt


@dataclass(frozen=True)
class SpikeStream:
    """Binary spike volume, shape (T, H, W), with acquisition metadata."""

    bits: np.ndarray
    freq: float
    theta: float

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 3 or min(bits.shape) < 1:
            raise InvalidInputError(f"bits must be (T, H, W) with all dims >= 1, got {bits.shape}")
        if bits.max(initial=0) > 1:
            raise InvalidInputError("spike bits must be 0 or 1")
        if not (self.theta > 0):
            raise InvalidParameterError(f"theta must be positive, got {self.theta}")
        if not (self.freq > 0):
            raise InvalidParameterError(f"freq must be positive, got {self.freq}")
        object.__setattr__(self, "bits", bits)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.bits.shape

    @property
    def t(self) -> int:
        return self.bits.shape[0]


@dataclass(frozen=True)
class SpikeInputVolume:
    """Contiguous temporal slice of a stream, ready to feed the spike branch."""

    planes: np.ndarray
    freq: float
    theta: float

    def __post_init__(self):
        planes = np.ascontiguousarray(self.planes, dtype=np.uint8)
        if planes.ndim != 3 or min(planes.shape) < 1:
            raise InvalidInputError(f"planes must be (T_model, H, W), got {planes.shape}")
        if planes.max(initial=0) > 1:
            raise InvalidInputError("spike planes must be 0 or 1")
        object.__setattr__(self, "planes", planes)

    @property
    def t_model(self) -> int:
        return self.planes.shape[0]


def simulate_spikes(
    lum: LuminanceSequence,
    theta: float = DEFAULT_THETA,
    reset: str = "carry",
) -> SpikeStream:
    """Run the integrate-and-fire model over a luminance sequence.

    Per pixel, an accumulator gains ``I * dt`` each step (left-endpoint
    rectangle rule) and a spike is emitted on every step where it reaches
    ``theta``; at most one spike per step.  ``reset`` selects what happens
    to the accumulator on a spike:

    * ``"carry"`` (default): subtract ``theta``, keeping the overshoot.
      This matches continuous-time integration sampled at the step clock
      and preserves the exact count law ``floor(I * dt * T / theta)`` for
      constant luminance with ``I * dt <= theta``.
    * ``"hard"``: reset to exactly 0, discarding the overshoot, as a
      readout circuit clocked at the step rate would.
    """
    if not isinstance(lum, LuminanceSequence):
        lum = LuminanceSequence(np.asarray(lum, dtype=np.float64), 1.0)
    if not (np.isfinite(theta) and theta > 0):
        raise InvalidParameterError(f"theta must be a positive finite real, got {theta}")
    if reset not in ("carry", "hard"):
        raise InvalidParameterError(f"reset must be 'carry' or 'hard', got {reset!r}")

    t_lum, h, w = lum.frames.shape
    bits = np.empty((t_lum, h, w), dtype=np.uint8)
    acc = np.zeros((h, w), dtype=np.float64)
    dt = float(lum.dt)
    for t in range(t_lum):
        acc += lum.frames[t] * dt
        fired = acc >= theta
        bits[t] = fired
        if reset == "carry":
            acc[fired] -= theta
        else:
            acc[fired] = 0.0
    return SpikeStream(bits=bits, freq=lum.freq, theta=float(theta))


def interpolate_frames(lum: LuminanceSequence, factor: int) -> LuminanceSequence:
    """Linearly upsample a luminance sequence in time by an integer factor.

    Output length is ``(T - 1) * factor + 1``; the original frames are kept
    bit-exactly at indices ``i * factor`` and ``dt`` shrinks by ``factor``.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise InvalidParameterError(f"factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return LuminanceSequence(lum.frames.copy(), lum.dt)

    frames = lum.frames
    t_in = frames.shape[0]
    if t_in == 1:
        return LuminanceSequence(frames.copy(), lum.dt / factor)

    t_out = (t_in - 1) * factor + 1
    out = np.empty((t_out,) + frames.shape[1:], dtype=np.float64)
    out[::factor] = frames  # endpoints of every gap preserved exactly
    for r in range(1, factor):
        w = r / factor
        out[r::factor] = frames[:-1] + (frames[1:] - frames[:-1]) * w
    return LuminanceSequence(out, lum.dt / factor)


def bin_stream(stream: SpikeStream, t_start: int, t_model: int) -> SpikeInputVolume:
    """Cut the contiguous temporal slice [t_start, t_start + t_model) of a stream."""
    if t_start < 0 or t_model < 1 or t_start + t_model > stream.t:
        raise InvalidParameterError(
            f"slice [{t_start}, {t_start + t_model}) out of range for stream with T={stream.t}"
        )
    return SpikeInputVolume(
        planes=stream.bits[t_start : t_start + t_model].copy(),
        freq=stream.freq,
        theta=stream.theta,
    )


def payload_nbytes(t: int, h: int, w: int) -> int:
    """Size of the packed payload: each (t, row) line is padded to whole bytes."""
    return t * h * ((w + 7) // 8)


def write_spk(stream: SpikeStream, path: str | os.PathLike) -> None:
    """Serialize a stream to the .spk container (little-endian, MSB-first bit packing)."""
    t, h, w = stream.shape
    if max(t, h, w) > _U32_MAX:
        raise FormatError(f"dimension {max(t, h, w)} overflows u32", offset=6)
    header = _SPK_HEADER.pack(_SPK_MAGIC, _SPK_VERSION, h, w, t, stream.freq, stream.theta)
    payload = np.packbits(stream.bits, axis=-1).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_spk(path: str | os.PathLike) -> SpikeStream:
    """Parse a .spk container written by :func:`write_spk` (bit-exact roundtrip)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _SPK_HEADER.size:
        raise FormatError("truncated header", offset=len(raw))
    magic, version, h, w, t, freq, theta = _SPK_HEADER.unpack_from(raw, 0)
    if magic != _SPK_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != _SPK_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if min(t, h, w) < 1:
        raise FormatError(f"invalid dimensions T={t} H={h} W={w}", offset=6)
    expected = payload_nbytes(t, h, w)
    payload = raw[_SPK_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(
            f"payload has {len(payload)} bytes, expected {expected}",
            offset=_SPK_HEADER.size + min(len(payload), expected),
        )
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(t, h, (w + 7) // 8)
    bits = np.unpackbits(packed, axis=-1, count=w)
    return SpikeStream(bits=bits, freq=freq, theta=theta)


def firing_rate(stream: SpikeStream) -> np.ndarray:
    """Per-pixel mean firing rate over the stream's T steps, in [0, 1]."""
    return stream.bits.mean(axis=0, dtype=np.float64)


def rate_image(stream: SpikeStream) -> np.ndarray:
    """8-bit grayscale image of firing rate: rate 1.0 maps to 255, round-half-up."""
    scaled = np.floor(firing_rate(stream) * 255.0 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)
