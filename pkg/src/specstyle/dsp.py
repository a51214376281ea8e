"""Short-time Fourier analysis, log-magnitude conversion, spectral centroid.

Framing convention: frame f covers samples [f*hop, f*hop + fft_size), with no
centering or padding, so frame_count = floor((len - fft_size)/hop) + 1. The
inverse transform is windowed overlap-add divided by the accumulated squared
window (weighted least-squares), which reproduces every sample covered by a
nonzero window weight exactly.

Defaults are fft_size=512 (257 bins), hop=256, periodic Hann.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .audio_io import AudioBuffer, _round_half_away

DEFAULT_FFT_SIZE = 512
DEFAULT_HOP = 256

_ENVELOPE_FLOOR = 1e-11  # below this, the overlap-add envelope is treated as zero


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FftConfig:
    """Analysis parameters shared by every spectrogram in a pipeline."""

    fft_size: int = DEFAULT_FFT_SIZE
    hop: int = DEFAULT_HOP
    window: str = "hann"

    def __post_init__(self):
        if not _is_power_of_two(self.fft_size):
            raise ValueError(f"fft_size must be a power of two, got {self.fft_size}")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError(f"hop must be in (0, fft_size], got {self.hop}")
        if self.fft_size % self.hop != 0:
            raise ValueError(
                f"fft_size must be a multiple of hop ({self.fft_size} % {self.hop} != 0)"
            )
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window w[i] = 0.5*(1 - cos(2*pi*i/n)); COLA at hop n/2, n/4."""
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    i = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * i / n))


def fft(x, inverse: bool = False) -> np.ndarray:
    """Radix-2 DFT with the exp(-2*pi*i*k*n/N) kernel; inverse scales by 1/N.

    Thin contract wrapper over numpy's FFT (same kernel and normalization);
    the power-of-two length requirement is enforced here.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or not _is_power_of_two(len(x)):
        raise ValueError(f"fft requires a 1-D power-of-two length input, got shape {x.shape}")
    return np.fft.ifft(x) if inverse else np.fft.fft(x)


class _SpectrogramGrid:
    """Common bins*frames grid behavior for the three spectrogram stages."""

    data: np.ndarray
    config: FftConfig
    sample_rate: int

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    def _validate(self, dtype):
        data = np.asarray(self.data, dtype=dtype)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError(f"spectrogram data must be 2-D, got shape {data.shape}")
        if data.shape[0] != self.config.bins:
            raise ValueError(
                f"bin count {data.shape[0]} does not match config ({self.config.bins})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("spectrogram entries must be finite")


@dataclass(frozen=True)
class ComplexSpectrogram(_SpectrogramGrid):
    data: np.ndarray
    config: FftConfig
    sample_rate: int

    def __post_init__(self):
        self._validate(np.complex128)


@dataclass(frozen=True)
class MagSpectrogram(_SpectrogramGrid):
    data: np.ndarray
    config: FftConfig
    sample_rate: int

    def __post_init__(self):
        self._validate(np.float64)
        if np.any(self.data < 0):
            raise ValueError("magnitudes must be nonnegative")


@dataclass(frozen=True)
class LogMagSpectrogram(_SpectrogramGrid):
    data: np.ndarray
    config: FftConfig
    sample_rate: int

    def __post_init__(self):
        self._validate(np.float64)
        if np.any(self.data < 0):
            raise ValueError("log1p magnitudes must be nonnegative")


def stft(buf: AudioBuffer, cfg: FftConfig = FftConfig()) -> ComplexSpectrogram:
    """Windowed forward transform of every frame; no centering or padding."""
    n, hop = cfg.fft_size, cfg.hop
    if len(buf) < n:
        raise ValueError(f"buffer of {len(buf)} samples is shorter than one frame ({n})")
    frames = (len(buf) - n) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(buf.samples, n)[:: hop][:frames]
    windowed = view * hann_window(n)
    data = np.fft.rfft(windowed, axis=1).T
    return ComplexSpectrogram(data, cfg, buf.sample_rate)


def istft(spec: ComplexSpectrogram) -> AudioBuffer:
    """Weighted least-squares inversion: windowed overlap-add over the
    accumulated squared-window envelope.

    Each column is inverted as the real part of the inverse DFT of its
    Hermitian extension. Output length is (frames-1)*hop + fft_size; samples
    the window never touches come back as zero.
    """
    cfg = spec.config
    n, hop = cfg.fft_size, cfg.hop
    w = hann_window(n)
    frames = np.fft.irfft(spec.data.T, n=n, axis=1)
    out_len = (spec.frames - 1) * hop + n
    acc = np.zeros(out_len)
    envelope = np.zeros(out_len)
    for f in range(spec.frames):
        lo = f * hop
        acc[lo : lo + n] += frames[f] * w
        envelope[lo : lo + n] += w * w
    covered = envelope > _ENVELOPE_FLOOR
    out = np.zeros(out_len)
    out[covered] = acc[covered] / envelope[covered]
    return AudioBuffer(out, spec.sample_rate)


def magnitude(spec: ComplexSpectrogram) -> MagSpectrogram:
    return MagSpectrogram(np.abs(spec.data), spec.config, spec.sample_rate)


def to_log_mag(spec: ComplexSpectrogram | MagSpectrogram) -> LogMagSpectrogram:
    """Compress magnitudes to L = ln(1 + |S|), the working domain for transfer."""
    return LogMagSpectrogram(np.log1p(np.abs(spec.data)), spec.config, spec.sample_rate)


def from_log_mag(spec: LogMagSpectrogram) -> MagSpectrogram:
    """Invert the log1p compression: M = exp(L) - 1, clamped at zero."""
    return MagSpectrogram(
        np.maximum(np.expm1(spec.data), 0.0), spec.config, spec.sample_rate
    )


def spectral_centroid(mag: MagSpectrogram) -> float:
    """Magnitude-weighted mean frequency over the whole clip, in Hz."""
    total = float(mag.data.sum())
    if total <= 0.0:
        raise ValueError("spectral centroid undefined for a silent clip")
    freqs = np.arange(mag.bins) * mag.sample_rate / mag.config.fft_size
    return float((freqs @ mag.data.sum(axis=1)) / total)


def export_csv(mag: MagSpectrogram, path) -> None:
    """Decimal-text grid: rows are bins from 0 Hz upward, columns are frames."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in mag.data:
            writer.writerow([repr(v) for v in row.tolist()])


def export_png(mag: MagSpectrogram, path) -> None:
    """8-bit grayscale image, row 0 = Nyquist bin (high frequencies on top).

    Pixel value is clamp(round(255*(dB+80)/80), 0, 255) with
    dB = 20*log10(|S| + 1e-10).
    """
    db = 20.0 * np.log10(mag.data + 1e-10)
    pixels = np.clip(_round_half_away(255.0 * (db + 80.0) / 80.0), 0, 255)
    image = np.flipud(pixels).astype(np.uint8)
    Image.fromarray(image, mode="L").save(Path(path), format="PNG")
