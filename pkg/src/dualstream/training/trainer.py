import logging
import math
import os
import time
import typing
from dataclasses import dataclass, field

import langsmith as ls
import numpy as np

from dualstream import errors
from dualstream.autograd import (
    Tensor,
    backward,
    check_gradients,
    cross_entropy,
    no_grad,
    softmax,
)
from dualstream.data import (
    BatchOptions,
    ChannelStats,
    Dataset,
    batches,
    compute_channel_stats,
    load_dataset,
    read_pnm,
    resize_bilinear,
    split,
    synth_dataset,
)
from dualstream.model import DualStreamNet, ModelConfig, build_model_config
from dualstream.optim import (
    AdamWState,
    adamw_step,
    fractional_epoch,
    init_adamw_states,
    lr_at,
    zero_grads,
)
from dualstream.training.checkpoint import (
    CheckpointMeta,
    load_checkpoint,
    restore,
    save_checkpoint,
)
from dualstream.training.config import RunConfig, config_hash
from dualstream.training.metrics import ConfusionMatrix, EpochRecord, MetricsLog

logger = logging.getLogger(__name__)

LAST_CHECKPOINT = "last.dsn"
BEST_CHECKPOINT = "best.dsn"
DEFAULT_EVAL_BATCH_SIZE = 64

# Steps of 1e-5 and up leave truncation error above tolerance in the stem.
DEFAULT_GRADCHECK_STEP = 1e-6
DEFAULT_GRADCHECK_ATOL = 1e-5
DEFAULT_GRADCHECK_TOLERANCE = 1e-4
DEFAULT_GRADCHECK_ENTRIES = 6


def epoch_checkpoint_name(epoch: int) -> str:
    return f"epoch_{epoch:04d}.dsn"


@dataclass
class StepInfo:
    """Passed to the `on_step` hook after backward and before the optimizer step."""

    epoch: int
    """Zero-based epoch being trained."""

    step: int
    """Global optimizer step about to be taken (zero-based)."""

    loss: float
    lr: float
    net: DualStreamNet


@dataclass
class EvaluationResult:
    confusion: ConfusionMatrix
    class_names: list[str]

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy


@dataclass
class TrainResult:
    records: list[EpochRecord]
    net: DualStreamNet
    epochs_completed: int
    steps: int
    best_accuracy: float | None
    best_epoch: int | None
    final_accuracy: float | None
    checkpoint_dir: str
    log_path: str
    states: dict[str, AdamWState] = field(default_factory=dict)


def load_run_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Build the configured corpus and split it into (train, test)."""
    if cfg.synth is not None:
        ds = synth_dataset(
            cfg.synth.n_per_class,
            num_classes=cfg.model.num_classes,
            image_size=cfg.model.input_size,
            seed=cfg.synth.seed,
        )
    else:
        ds = load_dataset(cfg.data_root, cfg.model.input_size, on_error=cfg.on_error)
    if ds.num_classes != cfg.model.num_classes:
        raise errors.ConfigurationError(
            f"Dataset has {ds.num_classes} classes but the model expects "
            f"{cfg.model.num_classes}"
        )
    train, test = split(ds, cfg.train_fraction, cfg.split_seed, stratified=cfg.stratified)
    logger.info(f"Split {len(ds)} samples into {len(train)} train / {len(test)} test")
    return train, test


def _stats_to_meta(stats: ChannelStats | None) -> dict[str, list[float]] | None:
    return None if stats is None else {"mean": list(stats.mean), "std": list(stats.std)}


def _stats_from_meta(meta: CheckpointMeta) -> ChannelStats | None:
    raw = meta.get("channel_stats")
    return None if raw is None else ChannelStats(tuple(raw["mean"]), tuple(raw["std"]))


def evaluate(
    net: DualStreamNet,
    ds: Dataset,
    *,
    batch_size: int = DEFAULT_EVAL_BATCH_SIZE,
    stats: ChannelStats | None = None,
) -> EvaluationResult:
    """Eval-mode accuracy and confusion matrix of `net` on `ds`.

    Predictions are the argmax of the logits; ties go to the lowest class id.
    """
    if ds.num_classes != net.config.num_classes:
        raise errors.ConfigurationError(
            f"Dataset has {ds.num_classes} classes but the model predicts "
            f"{net.config.num_classes}"
        )
    options = BatchOptions(stats=stats, dtype=net.dtype)
    labels, predictions = [], []
    with ls.trace(name="evaluate", inputs={"samples": len(ds)}) as rt, no_grad():
        for images, y in batches(ds, batch_size, options=options):
            logits = net(images, mode="eval")
            predictions.append(np.argmax(logits.data, axis=1))
            labels.append(y)
        confusion = ConfusionMatrix.from_predictions(
            np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64),
            np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64),
            net.config.num_classes,
        )
        rt.add_outputs({"accuracy": confusion.accuracy})
    return EvaluationResult(confusion, list(ds.class_names))


def _meta(
    cfg: RunConfig,
    class_names: list[str],
    epoch: int,
    step: int,
    best_accuracy: float | None,
    best_epoch: int | None,
    stats: ChannelStats | None,
) -> CheckpointMeta:
    return CheckpointMeta(
        config=cfg.model_dump(mode="json"),
        class_names=class_names,
        epoch=epoch,
        step=step,
        best_accuracy=best_accuracy,
        best_epoch=best_epoch,
        channel_stats=_stats_to_meta(stats),
    )


def train(
    cfg: RunConfig,
    *,
    resume: str | os.PathLike | None = None,
    force: bool = False,
    data: tuple[Dataset, Dataset] | None = None,
    on_step: typing.Callable[[StepInfo], None] | None = None,
) -> TrainResult:
    """Run the training regimen described by `cfg`.

    Every epoch shuffles the training split, and for each batch runs forward,
    cross-entropy, backward and an AdamW step at the learning rate of the
    current fractional epoch. Every `eval_every` epochs (and at the last
    scheduled epoch) the test split is evaluated and a row is appended to the
    metrics log. ``last.dsn`` is written after every epoch, ``best.dsn`` when
    test accuracy improves, and ``epoch_NNNN.dsn`` every `keep_every` epochs.

    Args:
        cfg: The run configuration.
        resume: Checkpoint to continue from; the continuation is identical to an
            uninterrupted run.
        force: Accept a resume checkpoint written under a different config.
        data: Pre-built (train, test) splits; built from `cfg` when omitted.
        on_step: Hook called after backward and before the optimizer step.

    Raises:
        TrainingAborted: A loss or gradient became non-finite.
        CheckpointWriteError: A checkpoint could not be written; the log is not
            advanced past the last written checkpoint.
    """
    train_ds, test_ds = data if data is not None else load_run_data(cfg)
    schedule = cfg.schedule
    cfg_hash = config_hash(cfg)
    stats = compute_channel_stats(train_ds) if cfg.standardize else None
    net = DualStreamNet(cfg.model, dtype=cfg.dtype)
    states = init_adamw_states(net.params)
    start_epoch, step = 0, 0
    best_accuracy: float | None = None
    best_epoch: int | None = None
    if resume is not None:
        checkpoint = load_checkpoint(resume, cfg_hash, force=force)
        restore(checkpoint, net.params, states)
        meta = checkpoint.meta
        start_epoch, step = int(meta["epoch"]), int(meta["step"])
        best_accuracy, best_epoch = meta.get("best_accuracy"), meta.get("best_epoch")
        stats = _stats_from_meta(meta) if cfg.standardize else None
        logger.info(f"Resuming from {resume} at epoch {start_epoch}, step {step}")

    checkpoint_dir = cfg.resolved_checkpoint_dir
    log = MetricsLog(cfg.resolved_log_path, resume_epoch=start_epoch if resume else None)
    steps_per_epoch = math.ceil(len(train_ds) / schedule.batch_size)
    if steps_per_epoch == 0:
        raise errors.ConfigurationError("Training split is empty")
    end_epoch = schedule.total_epochs
    if cfg.stop_after is not None:
        end_epoch = min(end_epoch, start_epoch + cfg.stop_after)
    options = BatchOptions(augment=cfg.augment_flags, stats=stats, dtype=cfg.dtype)
    final_accuracy: float | None = None
    completed = start_epoch

    def save(name: str) -> None:
        meta = _meta(
            cfg, list(train_ds.class_names), completed, step, best_accuracy, best_epoch, stats
        )
        path = os.path.join(checkpoint_dir, name)
        save_checkpoint(path, net.params, states, meta, cfg_hash)
        logger.debug(f"Checkpoint {path} at epoch {completed}")

    for epoch in range(start_epoch, end_epoch):
        started = time.perf_counter()
        epoch_lr = lr_at(fractional_epoch(step, steps_per_epoch), schedule)
        with ls.trace(
            name="train_epoch",
            inputs={"epoch": epoch + 1, "lr": epoch_lr},
            metadata={"kind": "dualstream"},
        ) as rt:
            train_loss, train_acc, step = _train_epoch(
                net, states, train_ds, cfg, epoch, step, steps_per_epoch, options, on_step
            )
            completed = epoch + 1
            record = None
            if completed % cfg.eval_every == 0 or completed == schedule.total_epochs:
                test_acc = evaluate(net, test_ds, stats=stats).accuracy if len(test_ds) else 0.0
                final_accuracy = test_acc
                seconds = time.perf_counter() - started if cfg.log_wall_time else 0.0
                record = EpochRecord(
                    completed,
                    train_loss,
                    train_acc,
                    test_acc,
                    lr_at(completed, schedule),
                    seconds,
                )
                if best_accuracy is None or test_acc > best_accuracy:
                    best_accuracy, best_epoch = test_acc, completed
                    save(BEST_CHECKPOINT)
            save(LAST_CHECKPOINT)
            if cfg.keep_every and completed % cfg.keep_every == 0:
                save(epoch_checkpoint_name(completed))
            outputs = {"train_loss": train_loss, "train_acc": train_acc}
            if record is not None:
                log.append(record)
                outputs["test_acc"] = record.test_acc
                logger.info(
                    f"epoch {completed}/{schedule.total_epochs} loss {train_loss:.4f} "
                    f"train_acc {train_acc:.4f} test_acc {record.test_acc:.4f} "
                    f"lr {record.lr:.3e}"
                )
            else:
                logger.info(f"epoch {completed}/{schedule.total_epochs} loss {train_loss:.4f}")
            rt.add_outputs(outputs)

    if best_epoch is not None:
        logger.info(
            f"Peak test accuracy {best_accuracy:.4f} at epoch {best_epoch}, "
            f"final {final_accuracy:.4f}"
        )
    return TrainResult(
        records=list(log.records),
        net=net,
        epochs_completed=completed,
        steps=step,
        best_accuracy=best_accuracy,
        best_epoch=best_epoch,
        final_accuracy=final_accuracy,
        checkpoint_dir=checkpoint_dir,
        log_path=log.path,
        states=states,
    )


def _train_epoch(
    net: DualStreamNet,
    states: dict[str, AdamWState],
    train_ds: Dataset,
    cfg: RunConfig,
    epoch: int,
    step: int,
    steps_per_epoch: int,
    options: BatchOptions,
    on_step: typing.Callable[[StepInfo], None] | None,
) -> tuple[float, float, int]:
    """One pass over the shuffled training split; returns (mean loss, accuracy, next step)."""
    schedule = cfg.schedule
    loss_sum, correct, seen = 0.0, 0, 0
    for images, labels in batches(
        train_ds, schedule.batch_size, shuffle=True, seed=cfg.seed, epoch=epoch, options=options
    ):
        lr = lr_at(fractional_epoch(step, steps_per_epoch), schedule)
        try:
            logits = net(images, mode="train")
            loss = cross_entropy(logits, labels)
            backward(loss)
            if on_step is not None:
                on_step(StepInfo(epoch, step, loss.item(), lr, net))
            adamw_step(net.params, states, lr, schedule)
        except errors.NumericalError as e:
            logger.error(f"Aborting at epoch {epoch + 1}, step {step}: {e}", exc_info=True)
            raise errors.TrainingAborted(
                f"Non-finite values at epoch {epoch + 1}, step {step}: {e}",
                epoch=epoch + 1,
                step=step,
            ) from e
        zero_grads(net.params)
        step += 1
        loss_sum += loss.item() * len(labels)
        correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
        seen += len(labels)
        logger.debug(f"epoch {epoch + 1} step {step} loss {loss.item():.6f} lr {lr:.3e}")
    return loss_sum / seen, correct / seen, step


@dataclass
class LoadedModel:
    """A model rebuilt from a checkpoint file alone."""

    net: DualStreamNet
    config: RunConfig
    class_names: list[str]
    stats: ChannelStats | None
    epoch: int


def load_model(path: str | os.PathLike) -> LoadedModel:
    checkpoint = load_checkpoint(path)
    meta = checkpoint.meta
    try:
        cfg = RunConfig.model_validate(meta["config"])
        class_names = list(meta["class_names"])
    except (KeyError, ValueError) as e:
        raise errors.CheckpointCorruptError(f"Checkpoint metadata is incomplete: {e}") from e
    net = DualStreamNet(cfg.model, dtype=cfg.dtype)
    restore(checkpoint, net.params)
    return LoadedModel(net, cfg, class_names, _stats_from_meta(meta), int(meta.get("epoch", 0)))


def evaluate_checkpoint(
    path: str | os.PathLike, ds: Dataset | None = None
) -> EvaluationResult:
    """Evaluate a checkpoint on `ds`, or on the test split of its own run config."""
    loaded = load_model(path)
    if ds is None:
        _, ds = load_run_data(loaded.config)
    return evaluate(loaded.net, ds, stats=loaded.stats)


class Prediction(typing.NamedTuple):
    label: int
    class_name: str
    probabilities: np.ndarray
    """Softmax over classes, indexed like `class_names`."""

    class_names: list[str]


def predict(path: str | os.PathLike, image_path: str | os.PathLike) -> Prediction:
    """Classify one PPM/PGM image with the model stored at `path`."""
    loaded = load_model(path)
    size = loaded.config.model.input_size
    pixels = resize_bilinear(read_pnm(image_path), size)[None]
    if loaded.stats is not None:
        pixels = loaded.stats.apply(pixels)
    with ls.trace(name="predict", inputs={"image": os.fspath(image_path)}) as rt, no_grad():
        logits = loaded.net(Tensor(pixels, dtype=loaded.net.dtype), mode="eval")
        probs = softmax(Tensor(logits.data, dtype=np.float64), axis=-1).data[0]
        label = int(np.argmax(probs))
        rt.add_outputs({"label": label, "class_name": loaded.class_names[label]})
    return Prediction(label, loaded.class_names[label], probs, list(loaded.class_names))


def miniature_config(
    input_size: int = 64, embed_dim: int = 16, seed: int = 0
) -> ModelConfig:
    """Small model used for full-model gradient checks: one attention block, narrow streams."""
    return build_model_config(
        input_size=input_size,
        stem_channels=8,
        embed_dim=embed_dim,
        num_lmhsa_blocks=1,
        num_heads=4,
        kv_reduction=2,
        mlp_conv_hidden_ratio=2,
        cnn_channels=(8, 8, 8, 8),
        seed=seed,
    )


@dataclass
class GradcheckReport:
    """Largest relative error per parameter group (a layer's weight, bias, ...)."""

    errors: dict[str, float]
    tolerance: float
    checked: int

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def format(self) -> str:
        width = max((len(g) for g in self.errors), default=5)
        lines = [f"{group:<{width}}  {err:.3e}" for group, err in self.errors.items()]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            f"{verdict}: max relative error {self.max_error:.3e} "
            f"(tolerance {self.tolerance:.0e}, {self.checked} entries)"
        )
        return "\n".join(lines)


def gradcheck(
    config: ModelConfig | None = None,
    *,
    batch_size: int = 2,
    seed: int = 0,
    data: Dataset | None = None,
    max_entries: int | None = DEFAULT_GRADCHECK_ENTRIES,
    step: float = DEFAULT_GRADCHECK_STEP,
    atol: float = DEFAULT_GRADCHECK_ATOL,
    tolerance: float = DEFAULT_GRADCHECK_TOLERANCE,
) -> GradcheckReport:
    """Compare full-model backward gradients with central finite differences.

    Runs in train mode at float64 on random images, or on `batch_size` samples
    drawn from `data`, and reports the maximum relative error of every
    parameter group, each exactly once.
    """
    config = config or miniature_config(seed=seed)
    net = DualStreamNet(config)
    rng = np.random.default_rng(seed)
    if data is None:
        shape = (batch_size, config.in_channels, config.input_size, config.input_size)
        images = Tensor(rng.random(shape))
        labels = rng.integers(0, config.num_classes, size=batch_size)
    else:
        if len(data) < batch_size:
            raise errors.ConfigurationError(
                f"gradcheck needs {batch_size} samples, the corpus has {len(data)}"
            )
        if data.num_classes != config.num_classes:
            raise errors.ConfigurationError(
                f"Corpus has {data.num_classes} classes but the model predicts "
                f"{config.num_classes}"
            )
        picked = np.sort(rng.choice(len(data), size=batch_size, replace=False))
        images = Tensor(np.stack([data.samples[i].pixels for i in picked]))
        labels = np.array([data.samples[i].label for i in picked])
    tensors = dict(net.params.trainable())

    def loss_fn() -> Tensor:
        return cross_entropy(net(images, mode="train"), labels)

    with ls.trace(name="gradcheck", inputs={"parameters": net.num_parameters()}) as rt:
        results = check_gradients(
            loss_fn, tensors, step=step, atol=atol, max_entries=max_entries, seed=seed
        )
        grouped: dict[str, float] = {}
        for group, names in net.params.groups().items():
            grouped[group] = max(results[n].max_rel_error for n in names)
        report = GradcheckReport(
            grouped, tolerance, sum(r.checked for r in results.values())
        )
        rt.add_outputs({"max_error": report.max_error, "passed": report.passed})
    logger.info(f"gradcheck max relative error {report.max_error:.3e} over {report.checked} entries")
    return report
