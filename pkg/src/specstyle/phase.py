"""Recover audible signals from magnitude-only spectrograms.

Two strategies, offline only: the classic iterative projection pair
(alternating magnitude replacement and consistency via ISTFT/STFT), and a
single-pass estimator that tracks spectral peaks frame to frame, advancing
each peak's phase by its interpolated instantaneous frequency and locking
neighboring bins to the nearest peak below them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .dsp import ComplexSpectrogram, MagSpectrogram, istft, stft

GRIFFIN_LIM_DEFAULT_ITERATIONS = 100

_FLAT_PEAK_GUARD = 1e-12  # quadratic-interpolation denominator floor


@dataclass(frozen=True)
class ReconstructionReport:
    """Result of a reconstruction run plus its per-iteration inconsistency."""

    signal: AudioBuffer
    iterations_run: int
    convergence_trace: tuple[float, ...]

    def __post_init__(self):
        if len(self.convergence_trace) != self.iterations_run:
            raise ValueError("trace length must equal iterations_run")
        if any(v < 0 for v in self.convergence_trace):
            raise ValueError("trace values must be nonnegative")


def spectral_convergence(target: MagSpectrogram, candidate: AudioBuffer) -> float:
    """Normalized Frobenius distance between the target magnitudes and the
    magnitude of the candidate's STFT (first `target.frames` frames)."""
    norm = float(np.linalg.norm(target.data))
    if norm == 0.0:
        raise ValueError("spectral convergence undefined for a zero-norm target")
    spec = stft(candidate, target.config)
    if spec.frames < target.frames:
        raise ValueError(
            f"candidate yields {spec.frames} frames, target has {target.frames}"
        )
    mags = np.abs(spec.data[:, : target.frames])
    return float(np.linalg.norm(mags - target.data) / norm)


def _initial_phase(target: MagSpectrogram, init: str, seed: int, phase) -> np.ndarray:
    if init == "zero":
        return np.zeros(target.data.shape)
    if init == "random":
        rng = np.random.default_rng(seed)
        return rng.uniform(0.0, 2.0 * np.pi, size=target.data.shape)
    if init == "provided":
        phase = np.asarray(phase, dtype=np.float64)
        if phase.shape != target.data.shape:
            raise ValueError(
                f"provided phase shape {phase.shape} != target {target.data.shape}"
            )
        return phase
    raise ValueError(f"unknown phase init {init!r}")


def griffin_lim(
    target: MagSpectrogram,
    iterations: int = GRIFFIN_LIM_DEFAULT_ITERATIONS,
    init: str = "zero",
    seed: int = 0,
    phase=None,
) -> ReconstructionReport:
    """Iterate magnitude replacement and STFT-consistency projection.

    Records spectral convergence after every ISTFT; the trace is
    non-increasing (each step is a pair of projections). An all-zero target
    short-circuits to silence with a zero trace.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    out_len = (target.frames - 1) * target.config.hop + target.config.fft_size
    if not np.any(target.data):
        silence = AudioBuffer(np.zeros(out_len), target.sample_rate)
        return ReconstructionReport(silence, iterations, (0.0,) * iterations)

    phases = _initial_phase(target, init, seed, phase)
    trace = []
    signal = None
    for _ in range(iterations):
        candidate = ComplexSpectrogram(
            target.data * np.exp(1j * phases), target.config, target.sample_rate
        )
        signal = istft(candidate)
        trace.append(spectral_convergence(target, signal))
        phases = np.angle(stft(signal, target.config).data)
    return ReconstructionReport(signal, iterations, tuple(trace))


def spsi_phases(target: MagSpectrogram) -> np.ndarray:
    """Single left-to-right pass of phase estimates for a magnitude grid.

    Per frame: bins strictly greater than both neighbors are peaks. Each
    peak's true frequency is found by quadratic interpolation over the
    (left, peak, right) magnitudes and its phase advanced by
    2*pi*f_est*hop/sr from the previous frame's value; every non-peak bin is
    locked to the phase of the nearest peak below it. All phases start at 0.
    """
    mags = target.data
    bins, frames = mags.shape
    n, hop = target.config.fft_size, target.config.hop
    phases = np.zeros((bins, frames))
    accum = np.zeros(bins)
    for f in range(frames):
        m = mags[:, f]
        interior = np.arange(1, bins - 1)
        is_peak = (m[interior] > m[interior - 1]) & (m[interior] > m[interior + 1])
        peaks = interior[is_peak]
        if peaks.size:
            left, mid, right = m[peaks - 1], m[peaks], m[peaks + 1]
            denom = left - 2.0 * mid + right
            delta = np.where(
                np.abs(denom) < _FLAT_PEAK_GUARD, 0.0, 0.5 * (left - right) / denom
            )
            accum[peaks] += 2.0 * np.pi * (peaks + delta) * hop / n
            # lock every non-peak bin to the nearest peak below it
            owner = np.searchsorted(peaks, np.arange(bins), side="right") - 1
            locked = np.ones(bins, dtype=bool)
            locked[peaks] = False
            locked &= owner >= 0
            accum[locked] = accum[peaks[owner[locked]]]
        phases[:, f] = accum
    return phases


def spsi(target: MagSpectrogram) -> AudioBuffer:
    """Non-iterative reconstruction: estimated phases plus a single ISTFT."""
    phases = spsi_phases(target)
    candidate = ComplexSpectrogram(
        target.data * np.exp(1j * phases), target.config, target.sample_rate
    )
    return istft(candidate)


def reconstruct(
    target: MagSpectrogram,
    method: str = "griffinlim",
    iterations: int = GRIFFIN_LIM_DEFAULT_ITERATIONS,
    init: str = "zero",
    seed: int = 0,
) -> ReconstructionReport:
    """Dispatch over the reconstruction methods.

    "griffinlim" iterates from the chosen init, "spsi" is the single pass
    (no trace), and "spsi+gl" seeds the iteration with the single-pass
    phase estimate.
    """
    if method == "griffinlim":
        return griffin_lim(target, iterations, init=init, seed=seed)
    if method == "spsi":
        return ReconstructionReport(spsi(target), 0, ())
    if method == "spsi+gl":
        if not np.any(target.data):
            return griffin_lim(target, iterations)
        return griffin_lim(target, iterations, init="provided", phase=spsi_phases(target))
    raise ValueError(f"unknown reconstruction method {method!r}")
