"""WAV file reading/writing and the canonical in-memory audio representation.

Accepts RIFF/WAVE files holding 16-bit integer PCM or 32-bit IEEE float
samples, mono or stereo. Everything is normalized to a mono float64 buffer
with amplitudes in [-1, 1]. Output is always 16-bit PCM mono with the
canonical 44-byte header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INT16_SCALE = 32768  # integer sample n maps to amplitude n / 32768


class WavError(Exception):
    """Base class for WAV parsing/serialization failures."""


class CorruptWavError(WavError):
    """Malformed RIFF structure, truncated chunks, or non-finite samples."""


class UnsupportedWavError(WavError):
    """Codec / bit depth / channel layout outside the supported set."""


class EmptyWavDataError(WavError):
    """A structurally valid file whose data chunk holds zero samples."""


@dataclass(frozen=True)
class AudioBuffer:
    """Mono time-domain signal: float64 samples plus a sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def _round_half_away(x: np.ndarray) -> np.ndarray:
    """Round half away from zero (ties never depend on parity)."""
    return np.trunc(x + np.copysign(0.5, x))


def read_wav(path) -> AudioBuffer:
    """Read a PCM-16 or float-32 RIFF/WAVE file into a mono AudioBuffer.

    Stereo is mixed down by per-sample arithmetic mean. Integer samples are
    scaled by 1/32768; float samples are clipped into [-1, 1].

    Raises FileNotFoundError for a missing file, UnsupportedWavError for
    codecs outside the supported set, EmptyWavDataError for a zero-length
    data chunk, and CorruptWavError for structural damage.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise CorruptWavError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise CorruptWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise CorruptWavError(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {channels} channels (only 1 or 2 supported)")
    if (audio_format, bits) == (1, 16):
        dtype = "<i2"
    elif (audio_format, bits) == (3, 32):
        dtype = "<f4"
    else:
        raise UnsupportedWavError(
            f"{path}: format tag {audio_format} at {bits} bits (PCM-16 or float-32 only)"
        )

    width = bits // 8
    if len(data) == 0:
        raise EmptyWavDataError(f"{path}: empty data chunk")
    if len(data) % (width * channels) != 0:
        raise CorruptWavError(f"{path}: data chunk is not a whole number of frames")

    samples = np.frombuffer(data, dtype=dtype).astype(np.float64)
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    if dtype == "<i2":
        samples = samples / INT16_SCALE
    else:
        if not np.all(np.isfinite(samples)):
            raise CorruptWavError(f"{path}: non-finite float samples")
        samples = np.clip(samples, -1.0, 1.0)
    return AudioBuffer(samples, int(sample_rate))


def write_wav(path, buf: AudioBuffer) -> None:
    """Write a buffer as 16-bit PCM mono, little-endian, 44-byte header.

    Amplitudes are hard-clipped to [-1, 1], scaled by 32768, and rounded
    half away from zero (so +1.0 maps to the clamped maximum 32767).
    """
    if len(buf) == 0:
        raise ValueError("cannot write an empty buffer")
    clipped = np.clip(buf.samples, -1.0, 1.0)
    quantized = _round_half_away(clipped * INT16_SCALE)
    quantized = np.clip(quantized, -32768, 32767).astype("<i2")

    data = quantized.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        1,  # PCM
        1,  # mono
        buf.sample_rate,
        buf.sample_rate * 2,
        2,
        16,
        b"data",
        len(data),
    )
    Path(path).write_bytes(header + data)
