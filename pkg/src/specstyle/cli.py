"""Command-line front end: transfer, figure1, reconstruct, train, spectrogram.

Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage error. All randomness is controlled by explicit seed flags, so a
rerun with identical flags reproduces its artifacts bit for bit.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audio_io import read_wav, write_wav
from .dsp import FftConfig, export_csv, export_png, from_log_mag, magnitude, stft
from .net import CONV1D, load_weights, save_weights
from .phase import reconstruct, spectral_convergence
from .transfer import INIT_MODES, TransferConfig, run_transfer, write_loss_csv
from .training import TrainConfig, assign_centroid_classes, load_dataset, train

PHASE_METHODS = ("griffinlim", "spsi", "spsi+gl")


class _UsageError(Exception):
    """Bad flag combination detected after argparse has run."""


def _channels(text: str) -> tuple[int, ...]:
    try:
        parsed = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not parsed or min(parsed) < 1:
        raise argparse.ArgumentTypeError(f"channel counts must be positive: {text!r}")
    return parsed


def _layer_list(text: str) -> tuple[int, ...]:
    try:
        parsed = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}")
    return parsed


def _add_fft_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--fft-size", type=int, default=512, help="FFT frame length")
    parser.add_argument("--hop", type=int, default=256, help="hop between frames")


def _fft_config(args) -> FftConfig:
    try:
        return FftConfig(args.fft_size, args.hop)
    except ValueError as exc:
        raise _UsageError(str(exc))


def _add_transfer_knobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=1.0, help="content loss weight")
    parser.add_argument("--beta", type=float, default=1e3, help="style loss weight")
    parser.add_argument("--iterations", type=int, default=500, help="optimizer steps")
    parser.add_argument("--step-size", type=float, default=0.05, help="Adam step size")
    parser.add_argument(
        "--noise-level",
        type=float,
        default=None,
        help="uniform noise amplitude for noisy inits (default: 0.1 x content max)",
    )
    parser.add_argument("--noise-seed", type=int, default=0, help="noise init seed")
    parser.add_argument(
        "--content-layer", type=int, default=None, help="1-based block for content (default: deepest)"
    )
    parser.add_argument(
        "--style-layers",
        type=_layer_list,
        default=None,
        help="comma-separated 1-based blocks for style (default: all)",
    )
    parser.add_argument(
        "--kernel-width", type=int, default=11, help="conv kernel width (random weights only)"
    )
    parser.add_argument(
        "--phase",
        choices=PHASE_METHODS,
        default="spsi+gl",
        help="phase reconstruction method for the output WAV",
    )
    parser.add_argument("--gl-iters", type=int, default=100, help="Griffin-Lim iterations")


def _write_transfer_artifacts(result, out_path: Path, phase_method: str, gl_iters: int) -> None:
    mag = from_log_mag(result.output)
    report = reconstruct(mag, method=phase_method, iterations=gl_iters)
    write_wav(out_path, report.signal)
    export_png(mag, out_path.parent / (out_path.stem + ".png"))
    write_loss_csv(result.loss_trace, out_path.parent / (out_path.stem + ".loss.csv"))


def _cmd_transfer(args) -> int:
    content = read_wav(args.content)
    style = read_wav(args.style)
    cfg = TransferConfig(
        alpha=args.alpha,
        beta=args.beta,
        iterations=args.iterations,
        step_size=args.step_size,
        init_mode=args.init,
        noise_level=args.noise_level,
        noise_seed=args.noise_seed,
        weights_path=args.weights,
        weights_seed=args.random_seed if args.random_seed is not None else 0,
        content_layer=args.content_layer,
        style_layers=args.style_layers,
        channels=args.channels,
        kernel_width=args.kernel_width,
        fft=_fft_config(args),
    )
    result = run_transfer(content, style, cfg)
    _write_transfer_artifacts(result, Path(args.out), args.phase, args.gl_iters)
    return 0


def _cmd_figure1(args) -> int:
    content = read_wav(args.content)
    style = read_wav(args.style)
    trained = load_weights(args.weights)  # also validates the file up front
    conv_specs = [s for s in trained.layers if s.kind == CONV1D]
    channels = tuple(s.out_channels for s in conv_specs)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    # Lettering: a) trained / plain, b) random / plain,
    #            c) trained / noisy init, d) random / noisy init.
    cells = (
        ("a", args.weights, "content"),
        ("b", None, "content"),
        ("c", args.weights, "content_plus_noise"),
        ("d", None, "content_plus_noise"),
    )
    for name, weights_path, init_mode in cells:
        cfg = TransferConfig(
            alpha=args.alpha,
            beta=args.beta,
            iterations=args.iterations,
            step_size=args.step_size,
            init_mode=init_mode,
            noise_level=args.noise_level,
            noise_seed=args.noise_seed,
            weights_path=weights_path,
            weights_seed=args.random_seed,
            content_layer=args.content_layer,
            style_layers=args.style_layers,
            channels=channels,
            kernel_width=conv_specs[0].kernel_width,
            fft=_fft_config(args),
        )
        result = run_transfer(content, style, cfg)
        _write_transfer_artifacts(result, outdir / f"{name}.wav", args.phase, args.gl_iters)
    return 0


def _cmd_reconstruct(args) -> int:
    buf = read_wav(args.in_path)
    mag = magnitude(stft(buf, _fft_config(args)))
    report = reconstruct(
        mag, method=args.method, iterations=args.iters, init=args.init, seed=args.seed
    )
    write_wav(args.out, report.signal)
    print(f"{spectral_convergence(mag, report.signal):.10f}")
    return 0


def _cmd_train(args) -> int:
    fft = _fft_config(args)
    clips = load_dataset(args.data, args.manifest)
    clips = assign_centroid_classes(clips, fft)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        step_size=args.step_size,
        seed=args.seed,
        aux_weight=args.aux_weight,
        num_classes=args.num_classes,
        channels=args.channels,
        kernel_width=args.kernel_width,
        fft=fft,
    )
    weights = train(clips, cfg, log_path=args.log)
    save_weights(weights, args.out)
    return 0


def _cmd_spectrogram(args) -> int:
    buf = read_wav(args.in_path)
    mag = magnitude(stft(buf, _fft_config(args)))
    suffix = Path(args.out).suffix.lower()
    if suffix == ".png":
        export_png(mag, args.out)
    elif suffix == ".csv":
        export_csv(mag, args.out)
    else:
        raise _UsageError(f"--out must end in .png or .csv, got {args.out!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specstyle",
        description="Audio style transfer on log-magnitude spectrograms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = {"formatter_class": argparse.ArgumentDefaultsHelpFormatter}

    p = sub.add_parser("transfer", help="style-transfer one clip onto another", **fmt)
    p.add_argument("--content", required=True, help="content WAV path")
    p.add_argument("--style", required=True, help="style WAV path")
    p.add_argument("--out", required=True, help="output WAV path (PNG and loss CSV beside it)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--weights", default=None, help="trained ASTW weight file")
    group.add_argument("--random-seed", type=int, default=None, help="random-weight seed")
    p.add_argument(
        "--init", choices=INIT_MODES, default="content", help="optimization starting grid"
    )
    p.add_argument(
        "--channels", type=_channels, default=(2048, 64), help="conv widths (random weights only)"
    )
    _add_transfer_knobs(p)
    _add_fft_flags(p)
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser(
        "figure1", help="2x2 grid: {trained, random} x {plain, noisy init}", **fmt
    )
    p.add_argument("--content", required=True, help="content WAV path")
    p.add_argument("--style", required=True, help="style WAV path")
    p.add_argument("--weights", required=True, help="trained ASTW weight file")
    p.add_argument("--outdir", required=True, help="directory for a/b/c/d artifacts")
    p.add_argument("--random-seed", type=int, default=0, help="seed for the random-weight cells")
    _add_transfer_knobs(p)
    _add_fft_flags(p)
    p.set_defaults(func=_cmd_figure1)

    p = sub.add_parser("reconstruct", help="magnitude-only waveform reconstruction", **fmt)
    p.add_argument("--in", dest="in_path", required=True, help="input WAV path")
    p.add_argument("--out", required=True, help="output WAV path")
    p.add_argument("--method", choices=PHASE_METHODS, default="griffinlim")
    p.add_argument("--iters", type=int, default=100, help="Griffin-Lim iterations")
    p.add_argument("--init", choices=("zero", "random"), default="zero", help="initial phase")
    p.add_argument("--seed", type=int, default=0, help="random-phase seed")
    _add_fft_flags(p)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("train", help="train the classifier and save ASTW weights", **fmt)
    p.add_argument("--data", required=True, help="directory of WAV clips")
    p.add_argument("--manifest", required=True, help="CSV of filename,class_id rows")
    p.add_argument("--out", required=True, help="output ASTW weight file")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--step-size", type=float, default=0.005, help="Adam step size")
    p.add_argument("--seed", type=int, default=0, help="init and shuffling seed")
    p.add_argument("--aux-weight", type=float, default=0.3, help="centroid-task loss weight")
    p.add_argument("--num-classes", type=int, default=50)
    p.add_argument("--channels", type=_channels, default=(64, 16), help="conv widths")
    p.add_argument("--kernel-width", type=int, default=11)
    p.add_argument("--log", default=None, help="optional training-log CSV path")
    _add_fft_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("spectrogram", help="export a magnitude spectrogram", **fmt)
    p.add_argument("--in", dest="in_path", required=True, help="input WAV path")
    p.add_argument("--out", required=True, help="output path (.png or .csv)")
    _add_fft_flags(p)
    p.set_defaults(func=_cmd_spectrogram)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"specstyle: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"specstyle: error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
