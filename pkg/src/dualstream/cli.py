"""Command-line entry point: ``dualstream {train,eval,predict,gradcheck,synth}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or checkpoint
error, 3 numerical failure (non-finite values, aborted training, failed
gradient check).

Every subcommand takes `--config`, `--seed`, `--data-root` and `--out-dir`; a
flag overrides the same key read from the config file.
"""

import argparse
import logging
import os
import sys
import typing

import numpy as np
from pydantic import TypeAdapter, ValidationError

from dualstream import errors
from dualstream.data import (
    centroid_baseline_accuracy,
    load_dataset,
    split,
    synth_dataset,
    write_corpus,
)
from dualstream.data.synth import DEFAULT_SYNTH_CLASSES, DEFAULT_SYNTH_IMAGE_SIZE
from dualstream.model import ModelConfig, build_model_config
from dualstream.optim import ScheduleConfig
from dualstream.training import (
    FLAT_KEYS,
    ConfigEntry,
    RunConfig,
    SynthSpec,
    build_run_config,
    evaluate,
    flatten_run_config,
    gradcheck,
    load_config_file,
    load_model,
    load_run_data,
    miniature_config,
    predict,
    train,
)
from dualstream.training.trainer import (
    DEFAULT_GRADCHECK_ENTRIES,
    DEFAULT_GRADCHECK_TOLERANCE,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
EVAL_REPORT = "eval.txt"
PREDICT_REPORT = "prediction.txt"
GRADCHECK_REPORT = "gradcheck.txt"
SYNTH_REPORT = "synth.txt"
DEFAULT_SYNTH_PER_CLASS = 40

COMMON_KEYS = ("seed", "data_root", "out_dir")
# Keys that pick the evaluation data; the model always comes from the checkpoint.
EVAL_KEYS = frozenset(
    {
        *COMMON_KEYS,
        "split_seed",
        "train_fraction",
        "stratified",
        "on_error",
        "synth_per_class",
        "synth_seed",
    }
)
SYNTH_KEYS = frozenset(
    {*COMMON_KEYS, "synth_per_class", "synth_seed", "num_classes", "input_size"}
)

_SECTIONS = {
    "model": ModelConfig,
    "schedule": ScheduleConfig,
    "run": RunConfig,
    "synth": SynthSpec,
}


def exit_code(error: BaseException) -> int:
    """Exit status the CLI reports for `error`."""
    if isinstance(error, errors.NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, (errors.IngestionError, errors.CheckpointError, OSError)):
        return EXIT_DATA
    return EXIT_USAGE


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> typing.NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _is_switch(key: str) -> bool:
    section, field = FLAT_KEYS[key]
    return _SECTIONS[section].model_fields[field].annotation is bool


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    """Flags every subcommand accepts; each also reads them from a --config file."""
    parser.add_argument("--config", help="Flat 'key = value' config file; flags override it.")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--data-root", dest="data_root", default=argparse.SUPPRESS)
    parser.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(
        "run configuration",
        "Every key accepted in a --config file; flags override the file.",
    )
    for key in FLAT_KEYS:
        if key in COMMON_KEYS:
            continue
        flag = "--" + key.replace("_", "-")
        if _is_switch(key):
            group.add_argument(flag, dest=key, nargs="?", const="true", default=argparse.SUPPRESS, metavar="BOOL")
        else:
            group.add_argument(flag, dest=key, default=argparse.SUPPRESS, metavar="VALUE")


def _add_log_level(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--log-level",
        default="INFO",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="dualstream",
        description="Train and evaluate a dual-stream (attention + CNN) image classifier.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="Train a model and write checkpoints plus a metrics CSV.")
    _add_common_flags(p)
    p.add_argument("--resume", help="Checkpoint to continue from.")
    p.add_argument("--force", action="store_true", help="Resume even if the config hash differs.")
    _add_config_flags(p)
    _add_log_level(p)

    p = commands.add_parser(
        "eval",
        help="Report accuracy and the confusion matrix of a checkpoint.",
        description=(
            "Evaluates on the test split of the checkpoint's own run. With a data "
            "root, every image under it is evaluated instead; --seed and the data "
            "keys of a --config file (split, synthetic corpus) rebuild the split. "
            f"--out-dir also writes the report to <out-dir>/{EVAL_REPORT}."
        ),
    )
    p.add_argument("checkpoint")
    _add_common_flags(p)
    _add_log_level(p)

    p = commands.add_parser(
        "predict",
        help="Classify one PPM/PGM image.",
        description=(
            "A relative image path is looked up under the data root when one is "
            f"given. --out-dir also writes the result to <out-dir>/{PREDICT_REPORT}. "
            "Prediction draws no random numbers, so --seed has no effect."
        ),
    )
    p.add_argument("checkpoint")
    p.add_argument("image")
    _add_common_flags(p)
    _add_log_level(p)

    p = commands.add_parser(
        "gradcheck",
        help="Check full-model gradients against finite differences.",
        description=(
            "Checks the miniature model; model keys of a --config file override it. "
            "With a data root the check runs on images from that corpus. "
            f"--out-dir also writes the report to <out-dir>/{GRADCHECK_REPORT}."
        ),
    )
    _add_common_flags(p)
    p.add_argument("--input-size", dest="input_size", type=int, default=argparse.SUPPRESS)
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument(
        "--max-entries",
        type=int,
        default=DEFAULT_GRADCHECK_ENTRIES,
        help="Entries sampled per parameter tensor; 0 checks every entry.",
    )
    p.add_argument("--tolerance", type=float, default=DEFAULT_GRADCHECK_TOLERANCE)
    _add_log_level(p)

    p = commands.add_parser(
        "synth",
        help="Write a synthetic cell-image corpus as <root>/<class>/*.ppm.",
        description=(
            "Sizes and seeds come from the flags, then from a --config file "
            "(synth_per_class, num_classes, input_size, synth_seed or seed). "
            f"--out-dir also writes the summary to <out-dir>/{SYNTH_REPORT}."
        ),
    )
    _add_common_flags(p)
    p.add_argument("--per-class", dest="synth_per_class", type=int, default=argparse.SUPPRESS)
    p.add_argument("--num-classes", dest="num_classes", type=int, default=argparse.SUPPRESS)
    p.add_argument("--image-size", dest="input_size", type=int, default=argparse.SUPPRESS)
    p.add_argument("--maxval", type=int, default=255)
    _add_log_level(p)
    return parser


def _file_and_flags(
    args: argparse.Namespace, keys: typing.Iterable[str]
) -> dict[str, typing.Any]:
    """Entries of the --config file overlaid with those of `keys` given as flags."""
    values: dict[str, typing.Any] = {}
    if args.config:
        values.update(load_config_file(args.config))
    for key in keys:
        if hasattr(args, key):
            values[key] = getattr(args, key)
    return values


def _setting(
    values: typing.Mapping[str, typing.Any],
    key: str,
    kind: type,
    default: typing.Any = None,
) -> typing.Any:
    """Typed value of one flat key; file entries are converted, flags are already typed."""
    raw = values.get(key)
    if raw is None:
        return default
    if not isinstance(raw, ConfigEntry):
        return raw
    try:
        return TypeAdapter(kind).validate_python(raw.value)
    except ValidationError as e:
        raise errors.ConfigurationError(
            f"{raw.source}:{raw.line}: invalid value {raw.value!r} for {key!r}"
        ) from e


def _warn_unused(
    values: typing.Mapping[str, typing.Any], used: typing.Collection[str], command: str
) -> None:
    for key in values:
        if key not in used:
            logger.warning(f"{command} ignores config key {key!r}")


def _write_report(out_dir: str | None, name: str, text: str) -> None:
    if not out_dir:
        return
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    logger.info(f"Wrote {path}")


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    return build_run_config(_file_and_flags(args, FLAT_KEYS))


def _train(args: argparse.Namespace) -> int:
    cfg = resolve_run_config(args)
    result = train(cfg, resume=args.resume, force=args.force)
    print(f"epochs completed: {result.epochs_completed} (steps {result.steps})")
    if result.best_epoch is not None:
        print(f"peak test accuracy: {result.best_accuracy:.4f} at epoch {result.best_epoch}")
        print(f"final test accuracy: {result.final_accuracy:.4f}")
    print(f"checkpoints: {result.checkpoint_dir}")
    print(f"metrics: {result.log_path}")
    return EXIT_OK


def _rebuilt_split_config(
    cfg: RunConfig, overrides: typing.Mapping[str, typing.Any]
) -> RunConfig:
    """The checkpoint's run config with data-source keys replaced."""
    flat = flatten_run_config(cfg)
    if "seed" in overrides:
        for derived in ("split_seed", "synth_seed"):
            flat.pop(derived, None)
    if "synth_per_class" in overrides:
        flat.pop("data_root", None)
    return build_run_config({**flat, **overrides})


def _eval(args: argparse.Namespace) -> int:
    values = _file_and_flags(args, COMMON_KEYS)
    _warn_unused(values, EVAL_KEYS, "eval")
    loaded = load_model(args.checkpoint)
    data_root = _setting(values, "data_root", str)
    if data_root:
        ds = load_dataset(data_root, loaded.config.model.input_size, on_error=loaded.config.on_error)
    else:
        overrides = {k: v for k, v in values.items() if k in EVAL_KEYS and k != "out_dir"}
        cfg = _rebuilt_split_config(loaded.config, overrides) if overrides else loaded.config
        _, ds = load_run_data(cfg)
    result = evaluate(loaded.net, ds, stats=loaded.stats)
    report = result.confusion.format(result.class_names)
    print(report, end="")
    _write_report(_setting(values, "out_dir", str), EVAL_REPORT, report)
    return EXIT_OK


def _predict(args: argparse.Namespace) -> int:
    values = _file_and_flags(args, COMMON_KEYS)
    _warn_unused(values, COMMON_KEYS, "predict")
    image = args.image
    data_root = _setting(values, "data_root", str)
    if data_root and not os.path.isabs(image):
        image = os.path.join(data_root, image)
    prediction = predict(args.checkpoint, image)
    lines = [f"{prediction.class_name} ({prediction.label})"]
    for k in np.argsort(-prediction.probabilities, kind="stable"):
        lines.append(f"  {prediction.class_names[k]:<24} {prediction.probabilities[k]:.4f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    _write_report(_setting(values, "out_dir", str), PREDICT_REPORT, text)
    return EXIT_OK


def _gradcheck_config(values: typing.Mapping[str, typing.Any]) -> ModelConfig:
    """The miniature model with model keys from the file and flags applied."""
    flat = {
        ("model_seed" if name == "seed" else name): value
        for name, value in miniature_config().model_dump().items()
    }
    if "seed" in values:
        flat.pop("model_seed")
    flat.update(
        {k: v for k, v in values.items() if k == "seed" or FLAT_KEYS[k][0] == "model"}
    )
    return build_run_config({**flat, "synth_per_class": 1}).model


def _gradcheck(args: argparse.Namespace) -> int:
    values = _file_and_flags(args, (*COMMON_KEYS, "input_size", "embed_dim"))
    model_keys = {k for k in values if FLAT_KEYS[k][0] == "model"}
    _warn_unused(values, {*COMMON_KEYS, *model_keys}, "gradcheck")
    seed = _setting(values, "seed", int, 0)
    config = _gradcheck_config(values)
    data = None
    data_root = _setting(values, "data_root", str)
    if data_root:
        data = load_dataset(data_root, config.input_size)
        if data.num_classes != config.num_classes:
            config = build_model_config(**{**config.model_dump(), "num_classes": data.num_classes})
    report = gradcheck(
        config,
        batch_size=args.batch_size,
        seed=seed,
        data=data,
        max_entries=args.max_entries or None,
        tolerance=args.tolerance,
    )
    text = report.format() + "\n"
    print(text, end="")
    _write_report(_setting(values, "out_dir", str), GRADCHECK_REPORT, text)
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _synth(args: argparse.Namespace) -> int:
    values = _file_and_flags(args, (*COMMON_KEYS, "synth_per_class", "num_classes", "input_size"))
    _warn_unused(values, SYNTH_KEYS, "synth")
    data_root = _setting(values, "data_root", str)
    if not data_root:
        raise errors.ConfigurationError("synth needs a data root (--data-root or data_root)")
    if hasattr(args, "seed"):
        seed = args.seed
    else:
        seed = _setting(values, "synth_seed", int, _setting(values, "seed", int, 0))
    ds = synth_dataset(
        _setting(values, "synth_per_class", int, DEFAULT_SYNTH_PER_CLASS),
        num_classes=_setting(values, "num_classes", int, DEFAULT_SYNTH_CLASSES),
        image_size=_setting(values, "input_size", int, DEFAULT_SYNTH_IMAGE_SIZE),
        seed=seed,
    )
    paths = write_corpus(ds, data_root, maxval=args.maxval)
    train_ds, test_ds = split(ds, seed=seed, stratified=True)
    if len(train_ds) and len(test_ds):
        baseline = centroid_baseline_accuracy(train_ds, test_ds)
    else:
        baseline = float("nan")
    text = (
        f"wrote {len(paths)} images in {ds.num_classes} classes to {data_root}\n"
        f"nearest-centroid baseline accuracy: {baseline:.4f}\n"
    )
    print(text, end="")
    _write_report(_setting(values, "out_dir", str), SYNTH_REPORT, text)
    return EXIT_OK


_COMMANDS: dict[str, typing.Callable[[argparse.Namespace], int]] = {
    "train": _train,
    "eval": _eval,
    "predict": _predict,
    "gradcheck": _gradcheck,
    "synth": _synth,
}


def main(argv: typing.Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return _COMMANDS[args.command](args)
    except (errors.DualStreamError, OSError) as e:
        code = exit_code(e)
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
