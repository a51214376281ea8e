"""Audio style transfer on log-magnitude spectrograms, with frequency bins
treated as the channel dimension of a 1-D convolutional feature network."""

from .audio_io import (
    AudioBuffer,
    CorruptWavError,
    EmptyWavDataError,
    UnsupportedWavError,
    WavError,
    read_wav,
    write_wav,
)
from .dsp import (
    ComplexSpectrogram,
    FftConfig,
    LogMagSpectrogram,
    MagSpectrogram,
    export_csv,
    export_png,
    fft,
    from_log_mag,
    hann_window,
    istft,
    magnitude,
    spectral_centroid,
    stft,
    to_log_mag,
)
from .net import (
    BadMagicError,
    BlockTrace,
    ForwardTrace,
    LayerSpec,
    NetworkWeights,
    ShapeError,
    TruncatedFileError,
    UnsupportedVersionError,
    WeightFileError,
    classifier_architecture,
    conv1d_forward,
    forward,
    gram,
    init_random,
    load_weights,
    maxpool2,
    relu,
    save_weights,
    transfer_architecture,
)
from .phase import (
    ReconstructionReport,
    griffin_lim,
    reconstruct,
    spectral_convergence,
    spsi,
    spsi_phases,
)
from .training import (
    LabeledClip,
    TrainConfig,
    assign_centroid_classes,
    classifier_forward,
    cross_entropy,
    evaluate,
    load_dataset,
    train,
)
from .transfer import (
    AdamState,
    LossRecord,
    TransferConfig,
    TransferResult,
    adam_step,
    backprop_to_input,
    content_loss,
    run_transfer,
    style_loss,
    write_loss_csv,
)

__all__ = [
    "AudioBuffer",
    "WavError",
    "CorruptWavError",
    "UnsupportedWavError",
    "EmptyWavDataError",
    "read_wav",
    "write_wav",
    "FftConfig",
    "ComplexSpectrogram",
    "MagSpectrogram",
    "LogMagSpectrogram",
    "fft",
    "hann_window",
    "stft",
    "istft",
    "magnitude",
    "to_log_mag",
    "from_log_mag",
    "spectral_centroid",
    "export_csv",
    "export_png",
    "ReconstructionReport",
    "spectral_convergence",
    "griffin_lim",
    "spsi",
    "spsi_phases",
    "reconstruct",
    "LayerSpec",
    "NetworkWeights",
    "BlockTrace",
    "ForwardTrace",
    "conv1d_forward",
    "relu",
    "maxpool2",
    "forward",
    "init_random",
    "gram",
    "transfer_architecture",
    "classifier_architecture",
    "save_weights",
    "load_weights",
    "WeightFileError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedFileError",
    "ShapeError",
    "TransferConfig",
    "TransferResult",
    "LossRecord",
    "AdamState",
    "adam_step",
    "content_loss",
    "style_loss",
    "backprop_to_input",
    "run_transfer",
    "write_loss_csv",
    "LabeledClip",
    "TrainConfig",
    "assign_centroid_classes",
    "classifier_forward",
    "cross_entropy",
    "train",
    "evaluate",
    "load_dataset",
]
