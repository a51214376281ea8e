"""1-D convolutional feature extractor with frequency bins as channels.

A log-magnitude spectrogram is treated as a (channels=bins, time=frames)
feature map; convolution kernels span the whole channel dimension and slide
along time only. The flat layer list (conv1d / relu / maxpool2 / dense) is
grouped into conv blocks for the forward pass; trailing dense layers form an
optional classifier head and are ignored by feature extraction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import LogMagSpectrogram

# A feature map is a plain (channels, time) float64 array.
FeatureMap = np.ndarray

CONV1D = "conv1d"
RELU = "relu"
MAXPOOL2 = "maxpool2"
DENSE = "dense"

_KIND_TAGS = {CONV1D: 0, RELU: 1, MAXPOOL2: 2, DENSE: 3}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

WEIGHT_FILE_MAGIC = b"ASTW"
WEIGHT_FILE_VERSION = 1


class WeightFileError(Exception):
    """Base class for weight-file serialization failures."""


class BadMagicError(WeightFileError):
    pass


class UnsupportedVersionError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


class ShapeError(WeightFileError):
    """Stored dimensions are inconsistent with each other or the layer specs."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    in_channels: int = 0
    kernel_width: int = 0

    def __post_init__(self):
        if self.kind not in _KIND_TAGS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in (CONV1D, DENSE) and (self.out_channels < 1 or self.in_channels < 1):
            raise ValueError(f"{self.kind} layer needs positive channel counts")
        if self.kind == CONV1D and (self.kernel_width < 1 or self.kernel_width % 2 == 0):
            raise ValueError(f"conv kernel width must be odd, got {self.kernel_width}")


def conv_spec(out_channels: int, in_channels: int, kernel_width: int) -> LayerSpec:
    return LayerSpec(CONV1D, out_channels, in_channels, kernel_width)


def dense_spec(out_channels: int, in_channels: int) -> LayerSpec:
    return LayerSpec(DENSE, out_channels, in_channels)


@dataclass
class NetworkWeights:
    """Ordered layer specs plus (weights, bias) arrays for conv/dense layers.

    params[i] is None for parameter-free layers. Conv kernels are
    (out, in, width); dense weights are (out, in); biases are (out,).
    """

    layers: list[LayerSpec]
    params: list[tuple[np.ndarray, np.ndarray] | None]

    def __post_init__(self):
        if len(self.layers) != len(self.params):
            raise ValueError("layers and params length mismatch")
        for spec, p in zip(self.layers, self.params):
            if spec.kind in (CONV1D, DENSE):
                if p is None:
                    raise ValueError(f"{spec.kind} layer is missing parameters")
                weights, bias = p
                expect = (
                    (spec.out_channels, spec.in_channels, spec.kernel_width)
                    if spec.kind == CONV1D
                    else (spec.out_channels, spec.in_channels)
                )
                if weights.shape != expect or bias.shape != (spec.out_channels,):
                    raise ValueError(
                        f"parameter shapes {weights.shape}/{bias.shape} do not match "
                        f"layer spec {spec}"
                    )
                if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
                    raise ValueError("weights must be finite")
            elif p is not None:
                raise ValueError(f"{spec.kind} layer cannot carry parameters")

    def conv_blocks(self) -> list["ConvBlock"]:
        return _parse_blocks(self.layers)[0]

    def dense_layers(self) -> list[int]:
        """Indices of dense layers, in order."""
        return [i for i, s in enumerate(self.layers) if s.kind == DENSE]


@dataclass(frozen=True)
class ConvBlock:
    """One conv layer with its optional relu/pool tail, by flat layer index."""

    conv_index: int
    has_relu: bool
    has_pool: bool


def _parse_blocks(layers: list[LayerSpec]) -> tuple[list[ConvBlock], int]:
    """Group the flat list into conv blocks; returns (blocks, head_start).

    The layout must be conv blocks (conv [relu] [maxpool2]) followed by an
    optional dense head (dense/relu entries only).
    """
    blocks = []
    i = 0
    while i < len(layers) and layers[i].kind == CONV1D:
        conv_index = i
        i += 1
        has_relu = i < len(layers) and layers[i].kind == RELU
        i += has_relu
        has_pool = i < len(layers) and layers[i].kind == MAXPOOL2
        i += has_pool
        blocks.append(ConvBlock(conv_index, has_relu, has_pool))
    for spec in layers[i:]:
        if spec.kind not in (DENSE, RELU):
            raise ValueError(
                f"unexpected {spec.kind} layer after the conv blocks (index {i})"
            )
    if not blocks:
        raise ValueError("architecture has no conv layers")
    return blocks, i


def transfer_architecture(
    bins: int, channels: tuple[int, ...] = (2048, 64), kernel_width: int = 11
) -> list[LayerSpec]:
    """Conv blocks only: conv -> relu -> maxpool2 per stage.

    channels=(4096,) with a single block reproduces the single-layer
    arrangement the channel trick originates from.
    """
    layers = []
    in_ch = bins
    for out_ch in channels:
        layers += [conv_spec(out_ch, in_ch, kernel_width), LayerSpec(RELU), LayerSpec(MAXPOOL2)]
        in_ch = out_ch
    return layers


def classifier_architecture(
    bins: int,
    channels: tuple[int, ...] = (2048, 64),
    kernel_width: int = 11,
    num_classes: int = 50,
    hidden: int = 32,
    aux_classes: int = 16,
) -> list[LayerSpec]:
    """Conv blocks plus the head: shared dense(hidden) with relu, then two
    parallel output layers (main task first, auxiliary task last)."""
    layers = transfer_architecture(bins, channels, kernel_width)
    layers += [
        dense_spec(hidden, channels[-1]),
        LayerSpec(RELU),
        dense_spec(num_classes, hidden),
        dense_spec(aux_classes, hidden),
    ]
    return layers


def conv1d_forward(x: FeatureMap, kernel: np.ndarray, bias: np.ndarray) -> FeatureMap:
    """Same-padded stride-1 convolution along time.

    out[o, t] = bias[o] + sum_{c,k} kernel[o, c, k] * x[c, t + k - (W-1)/2]
    with zero padding outside [0, time).
    """
    out_ch, in_ch, width = kernel.shape
    if x.shape[0] != in_ch:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {in_ch}")
    if width % 2 == 0:
        raise ValueError(f"kernel width must be odd, got {width}")
    pad = (width - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad)))
    view = np.lib.stride_tricks.sliding_window_view(padded, width, axis=1)
    # view[c, t, k] = padded[c, t + k]
    return np.tensordot(kernel, view, axes=((1, 2), (0, 2))) + bias[:, None]


def relu(x: FeatureMap) -> FeatureMap:
    return np.maximum(x, 0.0)


def maxpool2(x: FeatureMap) -> FeatureMap:
    """Max over adjacent time pairs, stride 2; a trailing odd column is dropped."""
    if x.shape[1] < 2:
        raise ValueError(f"maxpool2 needs time >= 2, got {x.shape[1]}")
    half = x.shape[1] // 2
    return x[:, : 2 * half].reshape(x.shape[0], half, 2).max(axis=2)


@dataclass(frozen=True)
class BlockTrace:
    """Per-block intermediates: post-activation (pre-pool) and post-pool maps."""

    activation: FeatureMap
    pooled: FeatureMap


@dataclass(frozen=True)
class ForwardTrace:
    blocks: tuple[BlockTrace, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def activation(self, block: int) -> FeatureMap:
        """Post-activation map of a 1-based block index."""
        if not 1 <= block <= len(self.blocks):
            raise ValueError(f"block index {block} outside 1..{len(self.blocks)}")
        return self.blocks[block - 1].activation

    def output(self) -> FeatureMap:
        return self.blocks[-1].pooled


def forward(w: NetworkWeights, spec: LogMagSpectrogram | FeatureMap) -> ForwardTrace:
    """Run the conv blocks over a spectrogram-as-feature-map.

    Accepts either a LogMagSpectrogram or a raw (channels, time) array whose
    channel count matches the first layer.
    """
    x = spec.data if isinstance(spec, LogMagSpectrogram) else np.asarray(spec, dtype=np.float64)
    first = w.layers[0]
    if x.shape[0] != first.in_channels:
        raise ValueError(
            f"input has {x.shape[0]} channels, first layer expects {first.in_channels}"
        )
    blocks = []
    for block in w.conv_blocks():
        kernel, bias = w.params[block.conv_index]
        x = conv1d_forward(x, kernel, bias)
        if block.has_relu:
            x = relu(x)
        activation = x
        if block.has_pool:
            x = maxpool2(x)
        blocks.append(BlockTrace(activation, x))
    return ForwardTrace(tuple(blocks))


def init_random(arch: list[LayerSpec], seed: int) -> NetworkWeights:
    """Rectifier-scaled Gaussian kernels, zero biases, deterministic per seed.

    Each layer draws from its own substream keyed by (seed, layer index), so
    adding or removing later layers never reshuffles earlier ones.
    """
    children = np.random.SeedSequence(seed).spawn(len(arch))
    params: list[tuple[np.ndarray, np.ndarray] | None] = []
    for i, spec in enumerate(arch):
        if spec.kind == CONV1D:
            rng = np.random.default_rng(children[i])
            std = np.sqrt(2.0 / (spec.in_channels * spec.kernel_width))
            kernel = rng.normal(
                0.0, std, size=(spec.out_channels, spec.in_channels, spec.kernel_width)
            )
            params.append((kernel, np.zeros(spec.out_channels)))
        elif spec.kind == DENSE:
            rng = np.random.default_rng(children[i])
            std = np.sqrt(2.0 / spec.in_channels)
            weights = rng.normal(0.0, std, size=(spec.out_channels, spec.in_channels))
            params.append((weights, np.zeros(spec.out_channels)))
        else:
            params.append(None)
    return NetworkWeights(list(arch), params)


def gram(f: FeatureMap) -> np.ndarray:
    """Time-normalized channel inner products: G[i, j] = sum_t f[i,t] f[j,t] / T."""
    if f.shape[1] < 1:
        raise ValueError("gram needs at least one time step")
    return (f @ f.T) / f.shape[1]


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise TruncatedFileError(f"{self.path}: file ends mid-record")
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def f32_array(self, count: int, shape) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def save_weights(w: NetworkWeights, path) -> None:
    """Write the little-endian ASTW container (values stored as float32)."""
    out = bytearray()
    out += WEIGHT_FILE_MAGIC
    out += struct.pack("<II", WEIGHT_FILE_VERSION, len(w.layers))
    for spec, p in zip(w.layers, w.params):
        out += struct.pack("<B", _KIND_TAGS[spec.kind])
        if spec.kind == CONV1D:
            weights, bias = p
            out += struct.pack(
                "<III", spec.out_channels, spec.in_channels, spec.kernel_width
            )
            out += weights.astype("<f4").tobytes()
            out += bias.astype("<f4").tobytes()
        elif spec.kind == DENSE:
            weights, bias = p
            out += struct.pack("<II", spec.out_channels, spec.in_channels)
            out += weights.astype("<f4").tobytes()
            out += bias.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_weights(path) -> NetworkWeights:
    """Read an ASTW file back into float64 arrays (at stored precision)."""
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(4) != WEIGHT_FILE_MAGIC:
        raise BadMagicError(f"{path}: bad magic bytes")
    version = reader.u32()
    if version != WEIGHT_FILE_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version} not supported")
    layer_count = reader.u32()
    layers: list[LayerSpec] = []
    params: list[tuple[np.ndarray, np.ndarray] | None] = []
    for _ in range(layer_count):
        tag = reader.u8()
        if tag not in _TAG_KINDS:
            raise ShapeError(f"{path}: unknown layer tag {tag}")
        kind = _TAG_KINDS[tag]
        if kind == CONV1D:
            out_ch, in_ch, width = reader.u32(), reader.u32(), reader.u32()
            if min(out_ch, in_ch, width) < 1 or width % 2 == 0:
                raise ShapeError(f"{path}: bad conv dimensions {out_ch}x{in_ch}x{width}")
            kernel = reader.f32_array(out_ch * in_ch * width, (out_ch, in_ch, width))
            bias = reader.f32_array(out_ch, (out_ch,))
            layers.append(conv_spec(out_ch, in_ch, width))
            params.append((kernel, bias))
        elif kind == DENSE:
            out_ch, in_ch = reader.u32(), reader.u32()
            if min(out_ch, in_ch) < 1:
                raise ShapeError(f"{path}: bad dense dimensions {out_ch}x{in_ch}")
            weights = reader.f32_array(out_ch * in_ch, (out_ch, in_ch))
            bias = reader.f32_array(out_ch, (out_ch,))
            layers.append(dense_spec(out_ch, in_ch))
            params.append((weights, bias))
        else:
            layers.append(LayerSpec(kind))
            params.append(None)
    if reader.pos != len(reader.blob):
        raise ShapeError(f"{path}: {len(reader.blob) - reader.pos} trailing bytes")
    convs = [s for s in layers if s.kind == CONV1D]
    for prev, nxt in zip(convs, convs[1:]):
        if nxt.in_channels != prev.out_channels:
            raise ShapeError(
                f"{path}: conv chain broken ({prev.out_channels} -> {nxt.in_channels})"
            )
    try:
        return NetworkWeights(layers, params)
    except ValueError as exc:
        raise ShapeError(f"{path}: {exc}") from exc
