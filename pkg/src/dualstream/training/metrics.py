import csv
import io
import logging
import os
import typing
from dataclasses import astuple, dataclass

import numpy as np
from sklearn.metrics import f1_score, precision_recall_fscore_support

from dualstream import errors
from dualstream.utils import format_significant

logger = logging.getLogger(__name__)

CSV_HEADER = ("epoch", "train_loss", "train_acc", "test_acc", "lr", "seconds")


@dataclass(frozen=True)
class EpochRecord:
    """One row of the metrics log."""

    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float
    lr: float
    """`lr_at` evaluated at the end boundary of this epoch."""

    seconds: float

    def __post_init__(self):
        for name in ("train_acc", "test_acc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise errors.ConfigurationError(f"{name} must be in [0, 1], got {value}")

    def to_row(self) -> list[str]:
        return [str(self.epoch)] + [format_significant(float(v)) for v in astuple(self)[1:]]

    @classmethod
    def from_row(cls, row: typing.Sequence[str]) -> "EpochRecord":
        return cls(int(row[0]), *(float(v) for v in row[1:]))


class MetricsLog:
    """Append-only CSV of `EpochRecord` rows.

    Opening with `resume_epoch` keeps the rows up to that epoch and drops the
    rest, so a resumed run continues the log it was checkpointed with. Opening
    without it starts a fresh file.
    """

    def __init__(self, path: str | os.PathLike, resume_epoch: int | None = None):
        self.path = os.fspath(path)
        kept: list[EpochRecord] = []
        if resume_epoch is not None and os.path.exists(self.path):
            kept = [r for r in read_metrics(self.path) if r.epoch <= resume_epoch]
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(self.path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(r.to_row() for r in kept)
        self.records = kept

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise errors.ContractViolationError(
                f"Epoch {record.epoch} does not follow logged epoch {self.records[-1].epoch}"
            )
        with open(self.path, "a", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(record.to_row())
        self.records.append(record)


def read_metrics(path: str | os.PathLike) -> list[EpochRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise errors.IngestionError("Metrics log has an unexpected header", path=os.fspath(path))
    return [EpochRecord.from_row(row) for row in rows[1:] if row]


class ClassMetrics(typing.NamedTuple):
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ConfusionMatrix:
    """K×K counts; rows are true classes, columns predictions.

    !!! example "Examples"
        ```python
        from dualstream.training import ConfusionMatrix

        cm = ConfusionMatrix.from_predictions([0, 1, 1, 2], [0, 1, 2, 2], num_classes=3)
        assert cm.total == 4 and cm.accuracy == 0.75
        assert cm.per_class()[1].recall == 0.5
        ```
    """

    counts: np.ndarray

    @classmethod
    def from_predictions(
        cls,
        labels: typing.Sequence[int] | np.ndarray,
        predictions: typing.Sequence[int] | np.ndarray,
        num_classes: int,
    ) -> "ConfusionMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        flat = np.bincount(labels * num_classes + predictions, minlength=num_classes**2)
        return cls(flat.reshape(num_classes, num_classes))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def _label_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        cells = np.arange(self.counts.size)
        repeats = self.counts.reshape(-1)
        return (
            np.repeat(cells // self.num_classes, repeats),
            np.repeat(cells % self.num_classes, repeats),
        )

    def per_class(self) -> list[ClassMetrics]:
        """Precision, recall and F1 per class; 0 where a denominator is empty."""
        if not self.total:
            return [ClassMetrics(0.0, 0.0, 0.0, 0) for _ in range(self.num_classes)]
        y_true, y_pred = self._label_arrays()
        precision, recall, f1, support = precision_recall_fscore_support(
            y_true, y_pred, labels=np.arange(self.num_classes), zero_division=0
        )
        return [
            ClassMetrics(float(p), float(r), float(f), int(s))
            for p, r, f, s in zip(precision, recall, f1, support)
        ]

    @property
    def macro_f1(self) -> float:
        if not self.total:
            return 0.0
        y_true, y_pred = self._label_arrays()
        return float(
            f1_score(
                y_true,
                y_pred,
                labels=np.arange(self.num_classes),
                average="macro",
                zero_division=0,
            )
        )

    def format(self, class_names: typing.Sequence[str] | None = None) -> str:
        names = list(class_names or [str(k) for k in range(self.num_classes)])
        width = max(max(len(n) for n in names), 6)
        out = io.StringIO()
        out.write(" " * width + " " + " ".join(f"{n[:6]:>6}" for n in names) + "\n")
        for name, row in zip(names, self.counts):
            out.write(f"{name:>{width}} " + " ".join(f"{int(c):>6}" for c in row) + "\n")
        out.write(f"\n{'class':>{width}} precision recall     f1 support\n")
        for name, m in zip(names, self.per_class()):
            out.write(
                f"{name:>{width}} {m.precision:9.4f} {m.recall:6.4f} {m.f1:6.4f} {m.support:7d}\n"
            )
        out.write(f"\naccuracy {self.accuracy:.4f}  macro-F1 {self.macro_f1:.4f}\n")
        return out.getvalue()
