"""Style transfer by direct optimization of a log-magnitude spectrogram.

Content is matched first-order (activations at one block), style second-order
(Gram matrices at one or more blocks). The optimized variable is the
log-magnitude grid itself, clamped nonnegative after every update step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer
from .dsp import FftConfig, LogMagSpectrogram, magnitude, stft, to_log_mag
from .net import (
    FeatureMap,
    ForwardTrace,
    NetworkWeights,
    conv1d_forward,
    forward,
    gram,
    init_random,
    load_weights,
    transfer_architecture,
)

INIT_MODES = ("content", "noise", "content_plus_noise")


@dataclass(frozen=True)
class TransferConfig:
    alpha: float = 1.0
    beta: float = 1e3
    iterations: int = 500
    step_size: float = 0.05
    init_mode: str = "content"
    noise_level: float | None = None  # None: 0.1 x the content grid's max
    noise_seed: int = 0
    weights_path: str | Path | None = None  # None: random weights from weights_seed
    weights_seed: int = 0
    content_layer: int | None = None  # 1-based block index; None: deepest
    style_layers: tuple[int, ...] | None = None  # None: every block
    channels: tuple[int, ...] = (2048, 64)
    kernel_width: int = 11
    fft: FftConfig = FftConfig()

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("alpha and beta cannot both be zero")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.noise_level is not None and self.noise_level < 0:
            raise ValueError(f"noise_level must be nonnegative, got {self.noise_level}")


@dataclass(frozen=True)
class LossRecord:
    """Weighted loss components at the start of one iteration."""

    total: float
    content: float
    style: float


@dataclass(frozen=True)
class TransferResult:
    output: LogMagSpectrogram
    loss_trace: tuple[LossRecord, ...]
    config: TransferConfig


def content_loss(f: FeatureMap, p: FeatureMap) -> tuple[float, FeatureMap]:
    """Mean-squared activation match: L = sum((f-p)^2) / (2 C T)."""
    if f.shape != p.shape:
        raise ValueError(f"feature shapes differ: {f.shape} vs {p.shape}")
    channels, frames = f.shape
    diff = f - p
    loss = float(np.sum(diff * diff)) / (2.0 * channels * frames)
    return loss, diff / (channels * frames)


def style_loss(f: FeatureMap, target_gram: np.ndarray) -> tuple[float, FeatureMap]:
    """Gram match: L = sum((G-A)^2) / (4 C^2) with G = f f^T / T.

    Gradient through the time-normalized Gram: dL/df = (G - A) f / (C^2 T).
    """
    channels, frames = f.shape
    if target_gram.shape != (channels, channels):
        raise ValueError(
            f"target gram is {target_gram.shape}, expected {(channels, channels)}"
        )
    diff = gram(f) - target_gram
    loss = float(np.sum(diff * diff)) / (4.0 * channels * channels)
    return loss, (diff @ f) / (channels * channels * frames)


def relu_backward(grad: FeatureMap, activation: FeatureMap) -> FeatureMap:
    """Gate by the forward sign; exactly-zero activations pass no gradient."""
    return grad * (activation > 0.0)


def maxpool2_backward(grad_pooled: FeatureMap, activation: FeatureMap) -> FeatureMap:
    """Route each pooled gradient to its argmax input; ties go to the earlier
    column, and a dropped trailing odd column receives zero."""
    channels, frames = activation.shape
    half = grad_pooled.shape[1]
    if grad_pooled.shape[0] != channels or half != frames // 2:
        raise ValueError(
            f"pooled gradient {grad_pooled.shape} does not match activation {activation.shape}"
        )
    pairs = activation[:, : 2 * half].reshape(channels, half, 2)
    right_wins = pairs[:, :, 1] > pairs[:, :, 0]
    routed = np.zeros((channels, half, 2))
    routed[:, :, 0] = np.where(right_wins, 0.0, grad_pooled)
    routed[:, :, 1] = np.where(right_wins, grad_pooled, 0.0)
    out = np.zeros_like(activation)
    out[:, : 2 * half] = routed.reshape(channels, 2 * half)
    return out


def conv1d_input_backward(grad_out: FeatureMap, kernel: np.ndarray) -> FeatureMap:
    """Adjoint of the same-padded correlation: convolve the output gradient
    with the channel-transposed, time-flipped kernel."""
    flipped = kernel.transpose(1, 0, 2)[:, :, ::-1]
    return conv1d_forward(grad_out, flipped, np.zeros(kernel.shape[1]))


def conv1d_param_backward(
    grad_out: FeatureMap, x: FeatureMap, kernel_width: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients for the kernel and bias of a same-padded convolution."""
    pad = (kernel_width - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad)))
    view = np.lib.stride_tricks.sliding_window_view(padded, kernel_width, axis=1)
    grad_kernel = np.einsum("ot,ctk->ock", grad_out, view)
    return grad_kernel, grad_out.sum(axis=1)


def backprop_to_input(
    w: NetworkWeights,
    x: LogMagSpectrogram | FeatureMap,
    layer_grads: dict[int, FeatureMap],
    trace: ForwardTrace | None = None,
) -> FeatureMap:
    """Accumulate loss gradients attached to block activations back to the
    input grid. layer_grads maps 1-based block index -> gradient with respect
    to that block's post-activation map.
    """
    if trace is None:
        trace = forward(w, x)
    blocks = w.conv_blocks()
    for index, grad in layer_grads.items():
        if not 1 <= index <= len(blocks):
            raise ValueError(f"block index {index} outside 1..{len(blocks)}")
        expected = trace.blocks[index - 1].activation.shape
        if grad.shape != expected:
            raise ValueError(
                f"gradient for block {index} is {grad.shape}, expected {expected}"
            )
    grad_out = np.zeros_like(trace.blocks[-1].pooled)
    for bi in range(len(blocks) - 1, -1, -1):
        block = blocks[bi]
        record = trace.blocks[bi]
        grad_act = (
            maxpool2_backward(grad_out, record.activation) if block.has_pool else grad_out
        )
        if bi + 1 in layer_grads:
            grad_act = grad_act + layer_grads[bi + 1]
        if block.has_relu:
            grad_act = relu_backward(grad_act, record.activation)
        kernel, _ = w.params[block.conv_index]
        grad_out = conv1d_input_backward(grad_act, kernel)
    return grad_out


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    step_size: float,
    t: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected first/second-moment update; returns the new params
    and state without mutating either input."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if t < 1:
        raise ValueError(f"step counter must be >= 1, got {t}")
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return params - step_size * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v)


def _resolve_weights(cfg: TransferConfig, bins: int) -> NetworkWeights:
    if cfg.weights_path is not None:
        w = load_weights(cfg.weights_path)
    else:
        arch = transfer_architecture(bins, cfg.channels, cfg.kernel_width)
        w = init_random(arch, cfg.weights_seed)
    first = w.layers[0]
    if first.in_channels != bins:
        raise ValueError(
            f"weights expect {first.in_channels} input channels, spectrogram has {bins} bins"
        )
    return w


def _initial_grid(cfg: TransferConfig, content: LogMagSpectrogram) -> np.ndarray:
    if cfg.init_mode == "content":
        return content.data.copy()
    level = cfg.noise_level
    if level is None:
        level = 0.1 * float(content.data.max())
    rng = np.random.default_rng(cfg.noise_seed)
    noise = rng.uniform(0.0, level, size=content.data.shape)
    if cfg.init_mode == "noise":
        return noise
    return content.data + noise


def run_transfer(
    content: AudioBuffer, style: AudioBuffer, cfg: TransferConfig = TransferConfig()
) -> TransferResult:
    """Optimize a log-magnitude grid toward the content activations of one
    clip and the style Grams of another. The style clip may differ in length;
    the time-normalized Gram removes duration."""
    if content.sample_rate != style.sample_rate:
        raise ValueError(
            f"sample rates differ: content {content.sample_rate} Hz, "
            f"style {style.sample_rate} Hz"
        )
    content_lm = to_log_mag(magnitude(stft(content, cfg.fft)))
    style_lm = to_log_mag(magnitude(stft(style, cfg.fft)))

    w = _resolve_weights(cfg, content_lm.bins)
    block_count = len(w.conv_blocks())
    content_layer = cfg.content_layer if cfg.content_layer is not None else block_count
    style_layers = (
        tuple(cfg.style_layers)
        if cfg.style_layers is not None
        else tuple(range(1, block_count + 1))
    )
    for index in (content_layer, *style_layers):
        if not 1 <= index <= block_count:
            raise ValueError(f"block index {index} outside 1..{block_count}")
    if not style_layers:
        raise ValueError("style_layers cannot be empty")

    content_target = forward(w, content_lm).activation(content_layer)
    style_trace = forward(w, style_lm)
    gram_targets = {l: gram(style_trace.activation(l)) for l in style_layers}

    x = _initial_grid(cfg, content_lm)
    state = AdamState.zeros(x.shape)
    records = []
    for t in range(1, cfg.iterations + 1):
        trace = forward(w, x)
        c_loss, c_grad = content_loss(trace.activation(content_layer), content_target)
        layer_grads: dict[int, FeatureMap] = {content_layer: cfg.alpha * c_grad}
        style_total = 0.0
        for l in style_layers:
            s_loss, s_grad = style_loss(trace.activation(l), gram_targets[l])
            style_total += s_loss
            weighted = cfg.beta * s_grad
            layer_grads[l] = layer_grads.get(l, 0.0) + weighted
        weighted_content = cfg.alpha * c_loss
        weighted_style = cfg.beta * style_total
        records.append(
            LossRecord(weighted_content + weighted_style, weighted_content, weighted_style)
        )
        grad = backprop_to_input(w, x, layer_grads, trace=trace)
        x, state = adam_step(x, grad, state, cfg.step_size, t)
        x = np.maximum(x, 0.0)

    output = LogMagSpectrogram(x, cfg.fft, content.sample_rate)
    return TransferResult(output, tuple(records), cfg)


def write_loss_csv(trace: tuple[LossRecord, ...], path) -> None:
    """Loss trace as CSV: iteration (1-based), total, content, style."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total", "content", "style"])
        for i, rec in enumerate(trace, start=1):
            writer.writerow([i, repr(rec.total), repr(rec.content), repr(rec.style)])
