"""Command line entry point for `hdspeaker` and `python -m hdspeaker`."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, NoReturn

from .cli import (
    DEFAULT_TOP,
    cmd_bench,
    cmd_classify,
    cmd_eval,
    cmd_inspect,
    cmd_refine,
    cmd_sweep,
    cmd_synth,
    cmd_train,
)
from .dataset import MIN_TEST_UTTERANCES
from .dsp import N_BINS
from .encoder import (
    DEFAULT_ALPHA,
    DEFAULT_NGRAM_ORDER,
    DEFAULT_PERMUTATION_SEED,
    DEFAULT_SEED_MEMORY_SEED,
    MAX_NGRAM_ORDER,
    EncoderConfig,
    WeightingMode,
)
from .exceptions import HdSpeakerError, InvalidInputError
from .glvq import DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, GlvqConfig, UpdateGate
from .inspect import DEFAULT_CORRELATION_SPEAKERS
from .synth import SynthConfig
from .vsa import DEFAULT_DIM

EXIT_USAGE = 1
EXIT_DATA = 2

logger = logging.getLogger("hdspeaker")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from e
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _mode_list(text: str) -> list[WeightingMode]:
    try:
        return [WeightingMode(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        modes = ",".join(mode.value for mode in WeightingMode)
        raise argparse.ArgumentTypeError(f"expected a subset of {modes}, got {text!r}") from e


def _encoder_options() -> argparse.ArgumentParser:
    parser = _Parser(add_help=False)
    group = parser.add_argument_group("encoder")
    group.add_argument("--dim", type=int, default=DEFAULT_DIM, help="hypervector dimension")
    group.add_argument(
        "--ngram",
        type=int,
        default=DEFAULT_NGRAM_ORDER,
        help=f"N-gram order, 1-{MAX_NGRAM_ORDER}",
    )
    group.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="energy exponent")
    group.add_argument(
        "--weighting",
        choices=[mode.value for mode in WeightingMode],
        default=WeightingMode.NORMALIZED.value,
    )
    group.add_argument(
        "--p-target",
        type=float,
        default=None,
        help="fixed target peak power (default: computed from the first 40 speakers)",
    )
    group.add_argument("--bins", type=int, default=N_BINS, help="frequency bins, 2-40")
    group.add_argument("--seed-memory", type=int, default=DEFAULT_SEED_MEMORY_SEED)
    group.add_argument("--seed-perm", type=int, default=DEFAULT_PERMUTATION_SEED)
    return parser


def _glvq_options() -> argparse.ArgumentParser:
    parser = _Parser(add_help=False)
    group = parser.add_argument_group("GLVQ")
    group.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    group.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE, help="learning rate")
    group.add_argument(
        "--lr-decay", type=float, default=1.0, help="per-epoch learning-rate multiplier"
    )
    group.add_argument(
        "--gate",
        choices=[gate.value for gate in UpdateGate],
        default=UpdateGate.MISCLASSIFIED_ONLY.value,
        help="which samples update the prototypes",
    )
    group.add_argument("--seed-shuffle", type=int, default=0)
    return parser


def _data_options(limit: bool = False) -> argparse.ArgumentParser:
    parser = _Parser(add_help=False)
    group = parser.add_argument_group("data")
    group.add_argument("--workers", type=int, default=1, help="threads for audio analysis")
    group.add_argument(
        "--strict", action="store_true", help="fail on unusable audio instead of skipping it"
    )
    group.add_argument("--min-test-utterances", type=int, default=MIN_TEST_UTTERANCES)
    if limit:
        group.add_argument(
            "--max-speakers", type=_positive_int, default=None, help="use only the first N speakers"
        )
    return parser


def _encoder_config(args: argparse.Namespace) -> EncoderConfig:
    return EncoderConfig(
        dim=args.dim,
        ngram_order=args.ngram,
        alpha=args.alpha,
        weighting=WeightingMode(args.weighting),
        p_target=args.p_target,
        n_bins=args.bins,
        seed_memory_seed=args.seed_memory,
        permutation_seed=args.seed_perm,
    )


def _glvq_config(args: argparse.Namespace) -> GlvqConfig:
    return GlvqConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        shuffle_seed=args.seed_shuffle,
        update_gate=UpdateGate(args.gate),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdspeaker", description="Hyperdimensional speaker identification")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    subparsers = parser.add_subparsers(dest="command")

    encoder, glvq = _encoder_options(), _glvq_options()

    train = subparsers.add_parser(
        "train", parents=[encoder, _data_options(limit=True)], help="one-shot training"
    )
    train.add_argument("root", help="dataset root: <speaker>/<context>/<utterance>.wav")
    train.add_argument("-o", "--out", required=True, help="model file to write")

    refine = subparsers.add_parser(
        "refine", parents=[glvq, _data_options()], help="GLVQ refinement of a trained model"
    )
    refine.add_argument("model")
    refine.add_argument("-o", "--out", required=True, help="refined model file to write")
    refine.add_argument("--eval-root", help="dataset whose reserved contexts score each epoch")
    refine.add_argument("--epochs-csv", help="write epoch stats here instead of stdout")

    evaluate = subparsers.add_parser(
        "eval", parents=[_data_options()], help="classify the reserved test contexts"
    )
    evaluate.add_argument("model")
    evaluate.add_argument("root")
    evaluate.add_argument(
        "--per-utterance", action="store_true", help="classify each test utterance separately"
    )
    evaluate.add_argument(
        "--train-seconds", type=float, default=None, help="training time for the efficiency figure"
    )
    evaluate.add_argument("--csv", dest="csv_path", help="write the report as CSV")
    evaluate.add_argument("--json", action="store_true", help="print the report as one JSON line")

    classify = subparsers.add_parser("classify", help="rank speakers for one WAV file")
    classify.add_argument("model")
    classify.add_argument("wav")
    classify.add_argument("--top", type=int, default=DEFAULT_TOP)

    inspect = subparsers.add_parser("inspect", help="describe and check a model")
    inspect.add_argument("model", nargs="?")
    inspect.add_argument("--correlation-csv", help="profile cosine matrix of the first speakers")
    inspect.add_argument("--first", type=int, default=DEFAULT_CORRELATION_SPEAKERS)
    inspect.add_argument("--speaker-dir", help="one speaker directory for the power table")
    inspect.add_argument("--power-csv", help="write per-utterance average bin power here")

    bench = subparsers.add_parser("bench", help="latency and throughput benchmarks")
    bench.add_argument("--speakers", type=int, default=1251)
    bench.add_argument("--dim", type=int, default=DEFAULT_DIM)
    bench.add_argument("--repeats", type=int, default=20)
    bench.add_argument("--train-audio", type=float, default=60.0, help="seconds of audio to train")
    bench.add_argument("--seed", type=int, default=0)

    synth = subparsers.add_parser("synth", help="write a synthetic formant-speaker corpus")
    synth.add_argument("root")
    synth.add_argument("--speakers", type=int, default=10)
    synth.add_argument("--contexts", type=int, default=3)
    synth.add_argument("--utterances", type=int, default=5)
    synth.add_argument("--seconds", type=float, default=3.0)
    synth.add_argument("--silence", type=float, default=0.0, help="mean silence padding (s)")
    synth.add_argument("--voicing", type=float, default=0.0, help="pulse share of excitation")
    synth.add_argument("--seed", type=int, default=0)

    sweep = subparsers.add_parser(
        "sweep",
        parents=[encoder, glvq, _data_options(limit=True)],
        help="train and evaluate a grid of encoder settings",
    )
    sweep.add_argument("root")
    sweep.add_argument("--orders", type=_int_list, default=[1, 2, 3, 4, 5])
    sweep.add_argument(
        "--modes", type=_mode_list, default=list(WeightingMode), help="comma-separated"
    )
    sweep.add_argument("--bins-list", type=_int_list, default=None, help="default: --bins")
    sweep.add_argument("--glvq", action="store_true", help="add a GLVQ-refined row per setting")
    sweep.add_argument("--csv", dest="csv_path")
    return parser


def _run(args: argparse.Namespace, progress: bool) -> int:
    data: dict[str, Any] = {}
    if hasattr(args, "workers"):
        data = {
            "workers": args.workers,
            "strict": args.strict,
            "progress": progress,
            "min_test_utterances": args.min_test_utterances,
        }

    match args.command:
        case "train":
            cmd_train(
                args.root,
                args.out,
                _encoder_config(args),
                max_speakers=args.max_speakers,
                **data,
            )
        case "refine":
            cmd_refine(
                args.model,
                args.out,
                _glvq_config(args),
                eval_root=args.eval_root,
                epochs_csv=args.epochs_csv,
                **data,
            )
        case "eval":
            cmd_eval(
                args.model,
                args.root,
                per_utterance=args.per_utterance,
                train_seconds=args.train_seconds,
                csv_path=args.csv_path,
                as_json=args.json,
                **data,
            )
        case "classify":
            cmd_classify(args.model, args.wav, args.top)
        case "inspect":
            if args.model is None and args.speaker_dir is None:
                raise InvalidInputError("inspect needs a model file or --speaker-dir")
            return cmd_inspect(
                args.model,
                correlation_csv=args.correlation_csv,
                first=args.first,
                speaker_dir=args.speaker_dir,
                power_csv=args.power_csv,
            )
        case "bench":
            cmd_bench(
                speakers=args.speakers,
                dim=args.dim,
                repeats=args.repeats,
                train_audio=args.train_audio,
                seed=args.seed,
            )
        case "synth":
            cfg = SynthConfig(
                n_speakers=args.speakers,
                n_contexts=args.contexts,
                utterances_per_context=args.utterances,
                seconds=args.seconds,
                silence_seconds=args.silence,
                voicing=args.voicing,
                seed=args.seed,
            )
            cmd_synth(args.root, cfg, progress)
        case "sweep":
            cmd_sweep(
                args.root,
                _encoder_config(args),
                orders=args.orders,
                modes=args.modes,
                bin_counts=args.bins_list or [args.bins],
                glvq_cfg=_glvq_config(args) if args.glvq else None,
                csv_path=args.csv_path,
                max_speakers=args.max_speakers,
                **data,
            )
    return 0


def main(argv: list[str] | None = None) -> int:
    """Dispatch hdspeaker subcommands.

    Exit codes: 0 success, 1 usage error, 2 data error.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    progress = not args.quiet and sys.stderr.isatty()

    try:
        return _run(args, progress)
    except InvalidInputError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except HdSpeakerError as e:
        logger.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
