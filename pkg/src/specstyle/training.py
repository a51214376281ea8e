"""Classifier training: conv features, a shared FC(32) trunk, and two
parallel heads — the labeled task plus a 16-way spectral-centroid auxiliary
task used as multi-task regularization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, read_wav
from .dsp import FftConfig, LogMagSpectrogram, magnitude, spectral_centroid, stft, to_log_mag
from .net import (
    FeatureMap,
    NetworkWeights,
    classifier_architecture,
    forward,
    init_random,
)
from .transfer import (
    AdamState,
    adam_step,
    conv1d_input_backward,
    conv1d_param_backward,
    maxpool2_backward,
    relu_backward,
)

CENTROID_CLASSES = 16


@dataclass(frozen=True)
class LabeledClip:
    audio: AudioBuffer
    class_id: int
    centroid_class: int | None = None

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be nonnegative, got {self.class_id}")
        if self.centroid_class is not None and not 0 <= self.centroid_class < CENTROID_CLASSES:
            raise ValueError(f"centroid_class {self.centroid_class} outside 0..15")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    step_size: float = 0.005
    seed: int = 0
    aux_weight: float = 0.3
    num_classes: int = 50
    channels: tuple[int, ...] = (64, 16)  # desk-scale default; full scale is (2048, 64)
    kernel_width: int = 11
    hidden: int = 32
    fft: FftConfig = FftConfig()

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.num_classes, self.hidden) < 1:
            raise ValueError("epochs, batch_size, num_classes, hidden must be positive")
        if self.step_size < 0:
            raise ValueError(f"step_size must be nonnegative, got {self.step_size}")
        if self.aux_weight < 0:
            raise ValueError(f"aux_weight must be nonnegative, got {self.aux_weight}")


def assign_centroid_classes(
    clips: list[LabeledClip], fft: FftConfig = FftConfig()
) -> list[LabeledClip]:
    """Split clips into 16 contiguous quantile groups by spectral centroid.

    Group k covers sorted positions [k*n//16, (k+1)*n//16), so sizes are
    floor(n/16) or ceil(n/16); sorting is stable, ties keep input order.
    Returns a new list in the original order.
    """
    n = len(clips)
    if n < CENTROID_CLASSES:
        raise ValueError(f"need at least {CENTROID_CLASSES} clips, got {n}")
    centroids = np.array(
        [spectral_centroid(magnitude(stft(c.audio, fft))) for c in clips]
    )
    order = np.argsort(centroids, kind="stable")
    labels = np.empty(n, dtype=int)
    for k in range(CENTROID_CLASSES):
        lo, hi = k * n // CENTROID_CLASSES, (k + 1) * n // CENTROID_CLASSES
        labels[order[lo:hi]] = k
    return [replace(c, centroid_class=int(lab)) for c, lab in zip(clips, labels)]


def _head_params(w: NetworkWeights):
    dense = w.dense_layers()
    if len(dense) != 3:
        raise ValueError(f"classifier head needs 3 dense layers, found {len(dense)}")
    return dense, w.params[dense[0]], w.params[dense[1]], w.params[dense[2]]


def classifier_forward(
    w: NetworkWeights, spec: LogMagSpectrogram | FeatureMap
) -> tuple[np.ndarray, np.ndarray]:
    """Conv features -> global average over time -> FC trunk with relu ->
    parallel (main, auxiliary) logit vectors."""
    _, (shared_w, shared_b), (main_w, main_b), (aux_w, aux_b) = _head_params(w)
    pooled = forward(w, spec).output()
    avg = pooled.mean(axis=1)
    if shared_w.shape[1] != avg.shape[0]:
        raise ValueError(
            f"head expects {shared_w.shape[1]} features, conv stack produced {avg.shape[0]}"
        )
    hidden = np.maximum(shared_w @ avg + shared_b, 0.0)
    return main_w @ hidden + main_b, aux_w @ hidden + aux_b


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy with max-subtraction; gradient is p - onehot."""
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} outside 0..{logits.shape[0] - 1}")
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    loss = float(np.log(exp.sum()) - shifted[label])
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad


def clip_gradients(
    w: NetworkWeights,
    grid: FeatureMap,
    class_id: int,
    centroid_class: int,
    aux_weight: float,
) -> tuple[float, float, np.ndarray, list]:
    """Losses, main-head logits, and full parameter gradients for one clip
    under L = CE_main + aux_weight * CE_aux.

    The returned gradient list is aligned with w.params (None for
    parameter-free layers).
    """
    dense, (shared_w, shared_b), (main_w, main_b), (aux_w, aux_b) = _head_params(w)
    trace = forward(w, grid)
    pooled = trace.output()
    frames = pooled.shape[1]
    avg = pooled.mean(axis=1)
    hidden_pre = shared_w @ avg + shared_b
    hidden = np.maximum(hidden_pre, 0.0)
    logits_main = main_w @ hidden + main_b
    logits_aux = aux_w @ hidden + aux_b

    loss_main, g_main = cross_entropy(logits_main, class_id)
    loss_aux, g_aux = cross_entropy(logits_aux, centroid_class)
    g_aux = aux_weight * g_aux

    grads: list = [None] * len(w.params)
    grads[dense[1]] = (np.outer(g_main, hidden), g_main)
    grads[dense[2]] = (np.outer(g_aux, hidden), g_aux)
    g_hidden = (main_w.T @ g_main + aux_w.T @ g_aux) * (hidden > 0.0)
    grads[dense[0]] = (np.outer(g_hidden, avg), g_hidden)

    # Mean over time spreads the feature-vector gradient evenly across frames.
    grad_out = np.repeat((shared_w.T @ g_hidden)[:, None] / frames, frames, axis=1)
    blocks = w.conv_blocks()
    x = grid.data if isinstance(grid, LogMagSpectrogram) else np.asarray(grid, dtype=np.float64)
    for bi in range(len(blocks) - 1, -1, -1):
        block = blocks[bi]
        record = trace.blocks[bi]
        g_act = maxpool2_backward(grad_out, record.activation) if block.has_pool else grad_out
        if block.has_relu:
            g_act = relu_backward(g_act, record.activation)
        kernel, _ = w.params[block.conv_index]
        block_input = trace.blocks[bi - 1].pooled if bi > 0 else x
        grads[block.conv_index] = conv1d_param_backward(g_act, block_input, kernel.shape[2])
        if bi > 0:
            grad_out = conv1d_input_backward(g_act, kernel)

    return loss_main, loss_aux, logits_main, grads


def _clip_grids(clips: list[LabeledClip], fft: FftConfig) -> list[FeatureMap]:
    return [to_log_mag(magnitude(stft(c.audio, fft))).data for c in clips]


def train(
    clips: list[LabeledClip], cfg: TrainConfig = TrainConfig(), log_path=None
) -> NetworkWeights:
    """Minibatch Adam on the multi-task loss; deterministic per cfg.seed.

    If log_path is given, writes a CSV of per-epoch training metrics
    (epoch, main_loss, aux_loss, main_acc).
    """
    if not clips:
        raise ValueError("empty dataset")
    for c in clips:
        if c.centroid_class is None:
            raise ValueError("centroid classes are unassigned; run assign_centroid_classes")
        if c.class_id >= cfg.num_classes:
            raise ValueError(f"class_id {c.class_id} outside 0..{cfg.num_classes - 1}")

    grids = _clip_grids(clips, cfg.fft)
    arch = classifier_architecture(
        cfg.fft.bins,
        cfg.channels,
        cfg.kernel_width,
        num_classes=cfg.num_classes,
        hidden=cfg.hidden,
        aux_classes=CENTROID_CLASSES,
    )
    w = init_random(arch, cfg.seed)
    states = [
        None if p is None else (AdamState.zeros(p[0].shape), AdamState.zeros(p[1].shape))
        for p in w.params
    ]
    rng = np.random.default_rng(cfg.seed)
    log_rows = []
    step = 0
    n = len(clips)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        main_sum = aux_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            batch_grads: list = [None] * len(w.params)
            for idx in batch:
                clip = clips[idx]
                lm, la, logits, grads = clip_gradients(
                    w, grids[idx], clip.class_id, clip.centroid_class, cfg.aux_weight
                )
                main_sum += lm
                aux_sum += la
                correct += int(np.argmax(logits)) == clip.class_id
                for i, g in enumerate(grads):
                    if g is None:
                        continue
                    if batch_grads[i] is None:
                        batch_grads[i] = [g[0].copy(), g[1].copy()]
                    else:
                        batch_grads[i][0] += g[0]
                        batch_grads[i][1] += g[1]
            step += 1
            scale = 1.0 / len(batch)
            for i, g in enumerate(batch_grads):
                if g is None:
                    continue
                weights, bias = w.params[i]
                sw, sb = states[i]
                weights, sw = adam_step(weights, g[0] * scale, sw, cfg.step_size, step)
                bias, sb = adam_step(bias, g[1] * scale, sb, cfg.step_size, step)
                w.params[i] = (weights, bias)
                states[i] = (sw, sb)
        log_rows.append((epoch, main_sum / n, aux_sum / n, correct / n))

    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "main_loss", "aux_loss", "main_acc"])
            for row in log_rows:
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    return w


def evaluate(
    w: NetworkWeights, clips: list[LabeledClip], fft: FftConfig = FftConfig()
) -> tuple[float, float]:
    """Argmax accuracy per head (main, centroid); ties go to the lower index."""
    if not clips:
        raise ValueError("empty dataset")
    main_hits = aux_hits = 0
    for clip, grid in zip(clips, _clip_grids(clips, fft)):
        logits_main, logits_aux = classifier_forward(w, grid)
        main_hits += int(np.argmax(logits_main)) == clip.class_id
        if clip.centroid_class is not None:
            aux_hits += int(np.argmax(logits_aux)) == clip.centroid_class
    return main_hits / len(clips), aux_hits / len(clips)


def load_dataset(data_dir, manifest_path) -> list[LabeledClip]:
    """Read `filename,class_id` rows (an optional literal header is skipped)
    and load each WAV from data_dir."""
    data_dir = Path(data_dir)
    clips = []
    with open(manifest_path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if [col.strip().lower() for col in row[:2]] == ["filename", "class_id"]:
                continue
            if len(row) < 2:
                raise ValueError(f"manifest row {row!r} needs filename,class_id")
            clips.append(LabeledClip(read_wav(data_dir / row[0].strip()), int(row[1])))
    if not clips:
        raise ValueError(f"manifest {manifest_path} lists no clips")
    return clips
