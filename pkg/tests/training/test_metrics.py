import numpy as np
import pytest

from dualstream import errors
from dualstream.training import CSV_HEADER, ConfusionMatrix, EpochRecord, MetricsLog, read_metrics


def record(epoch, loss=1.0):
    return EpochRecord(epoch, loss, 0.5, 0.25, 1e-3, 0.0)


def test_rows_use_nine_significant_digits():
    row = EpochRecord(3, 1 / 3, 0.875, 2 / 3, 2e-8, 12.5).to_row()
    assert row == ["3", "0.333333333", "0.875", "0.666666667", "2e-08", "12.5"]
    assert EpochRecord.from_row(row).train_loss == pytest.approx(1 / 3, rel=1e-9)


def test_accuracies_must_be_fractions():
    with pytest.raises(errors.ConfigurationError, match="test_acc"):
        EpochRecord(1, 1.0, 0.5, 1.5, 1e-3, 0.0)


def test_log_writes_header_and_rows(tmp_path):
    path = tmp_path / "logs" / "metrics.csv"
    log = MetricsLog(path)
    log.append(record(1))
    log.append(record(2, loss=0.5))
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[2] == "2,0.5,0.5,0.25,0.001,0"
    assert read_metrics(path) == log.records


def test_epochs_must_increase(tmp_path):
    log = MetricsLog(tmp_path / "metrics.csv")
    log.append(record(2))
    with pytest.raises(errors.ContractViolationError):
        log.append(record(2))


def test_resume_truncates_to_the_checkpoint_epoch(tmp_path):
    path = tmp_path / "metrics.csv"
    log = MetricsLog(path)
    for epoch in (1, 2, 3):
        log.append(record(epoch))
    resumed = MetricsLog(path, resume_epoch=2)
    assert [r.epoch for r in resumed.records] == [1, 2]
    resumed.append(record(3, loss=0.1))
    assert [r.train_loss for r in read_metrics(path)] == [1.0, 1.0, 0.1]
    fresh = MetricsLog(path)
    assert fresh.records == [] and read_metrics(path) == []


def test_read_metrics_checks_the_header(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(errors.IngestionError, match="header"):
        read_metrics(path)


def test_confusion_matrix_counts_and_scores():
    cm = ConfusionMatrix.from_predictions([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 0, 0], num_classes=3)
    np.testing.assert_array_equal(cm.counts, [[1, 1, 0], [0, 2, 0], [2, 0, 0]])
    assert cm.accuracy == pytest.approx(0.5)
    zero, one, two = cm.per_class()
    assert zero.precision == pytest.approx(1 / 3) and zero.recall == 0.5
    assert one.f1 == pytest.approx(0.8)
    # Class 2 is never predicted; empty denominators give 0.
    assert two == (0.0, 0.0, 0.0, 2)
    assert cm.macro_f1 == pytest.approx((0.4 + 0.8 + 0.0) / 3)


def test_confusion_matrix_report_lists_every_class():
    cm = ConfusionMatrix.from_predictions([0, 1], [0, 1], num_classes=2)
    text = cm.format(["parabasal", "superficial"])
    assert "parabasal" in text and "superficial" in text
    assert "accuracy 1.0000" in text
    assert ConfusionMatrix(np.zeros((2, 2), dtype=int)).accuracy == 0.0


def test_scores_agree_with_the_counts(rng):
    labels = rng.integers(0, 4, size=200)
    predictions = np.where(rng.random(200) < 0.6, labels, rng.integers(0, 4, size=200))
    cm = ConfusionMatrix.from_predictions(labels, predictions, num_classes=5)
    diag = np.diag(cm.counts)
    predicted, actual = cm.counts.sum(axis=0), cm.counts.sum(axis=1)
    scores = cm.per_class()
    for k in range(4):
        precision, recall = diag[k] / predicted[k], diag[k] / actual[k]
        assert scores[k].precision == pytest.approx(precision)
        assert scores[k].recall == pytest.approx(recall)
        assert scores[k].f1 == pytest.approx(2 * precision * recall / (precision + recall))
        assert scores[k].support == actual[k]
    # Class 4 never occurs and is never predicted.
    assert scores[4] == (0.0, 0.0, 0.0, 0)
    assert cm.macro_f1 == pytest.approx(sum(s.f1 for s in scores) / 5)
    assert ConfusionMatrix(np.zeros((3, 3), dtype=int)).per_class()[0].support == 0
