import os

import numpy as np
import pytest

from dualstream import errors
from dualstream.autograd import functional
from dualstream.data import Dataset, LabeledSample, synth_dataset, write_corpus
from dualstream.model import DualStreamNet
from dualstream.training import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    epoch_checkpoint_name,
    evaluate,
    evaluate_checkpoint,
    gradcheck,
    load_checkpoint,
    load_model,
    load_run_data,
    miniature_config,
    predict,
    read_metrics,
    train,
)


def params_of(net):
    return {name: t.data.copy() for name, t in net.params.items()}


def test_training_is_deterministic(make_run_config):
    first = train(make_run_config("a"))
    second = train(make_run_config("b"))
    assert open(first.log_path, "rb").read() == open(second.log_path, "rb").read()
    for name, array in params_of(first.net).items():
        np.testing.assert_array_equal(second.net.params[name].data, array)
    assert [r.epoch for r in first.records] == [1, 2, 3]
    assert first.steps == 9
    # Wall time is not logged, so the seconds column is zero.
    assert all(r.seconds == 0.0 for r in first.records)


def test_loss_goes_down_on_a_learnable_corpus(make_run_config):
    cfg = make_run_config(input_size=32, synth_per_class=20, batch_size=8, epochs=3, seed=11)
    result = train(cfg)
    assert result.records[-1].train_loss < result.records[0].train_loss


def test_resume_matches_an_uninterrupted_run(make_run_config):
    full = train(make_run_config("full"))

    partial_cfg = make_run_config("partial", stop_after=2)
    partial = train(partial_cfg)
    assert partial.epochs_completed == 2
    last = os.path.join(partial.checkpoint_dir, LAST_CHECKPOINT)
    assert load_checkpoint(last).meta["epoch"] == 2

    resumed = train(make_run_config("partial"), resume=last)
    assert resumed.epochs_completed == 3
    assert resumed.records == full.records
    assert open(resumed.log_path, "rb").read() == open(full.log_path, "rb").read()
    for name, array in params_of(full.net).items():
        np.testing.assert_array_equal(resumed.net.params[name].data, array)


def test_resume_under_a_different_config(make_run_config):
    first = train(make_run_config("a", stop_after=1))
    last = os.path.join(first.checkpoint_dir, LAST_CHECKPOINT)
    changed = make_run_config("b", base_lr=5e-3)
    with pytest.raises(errors.CheckpointConfigMismatchError):
        train(changed, resume=last)
    assert train(changed, resume=last, force=True).epochs_completed == 3


def test_checkpoints_written(make_run_config):
    result = train(make_run_config(keep_every=2))
    names = set(os.listdir(result.checkpoint_dir))
    assert {LAST_CHECKPOINT, BEST_CHECKPOINT, epoch_checkpoint_name(2)} <= names
    assert epoch_checkpoint_name(1) not in names
    best = load_checkpoint(os.path.join(result.checkpoint_dir, BEST_CHECKPOINT)).meta
    assert best["epoch"] == best["best_epoch"] == result.best_epoch
    assert best["best_accuracy"] == max(r.test_acc for r in result.records)


def test_eval_every_thins_the_log(make_run_config):
    result = train(make_run_config(epochs=4, eval_every=3))
    assert [r.epoch for r in read_metrics(result.log_path)] == [3, 4]


def test_logged_lr_is_the_end_of_epoch_rate(make_run_config):
    result = train(make_run_config())
    # Warmup ends after epoch 1; the last epoch ends at min_lr.
    assert result.records[0].lr == pytest.approx(1e-2)
    assert result.records[-1].lr == pytest.approx(1e-3)


def test_non_finite_gradient_aborts_with_location(make_run_config):
    def poison(info):
        if info.epoch == 1 and info.step == 4:
            info.net.params["head.fc2.weight"].grad[0, 0] = np.nan

    with pytest.raises(errors.TrainingAborted) as excinfo:
        train(make_run_config(), on_step=poison)
    assert (excinfo.value.epoch, excinfo.value.step) == (2, 4)


def test_class_count_mismatch(make_run_config, corpus_dir):
    cfg = make_run_config(num_classes=4).model_copy(
        update={"synth": None, "data_root": str(corpus_dir)}
    )
    with pytest.raises(errors.ConfigurationError, match="3 classes"):
        load_run_data(cfg)


def test_evaluate_with_a_biased_head(tiny_config, tiny_dataset):
    net = DualStreamNet(tiny_config)
    k = 2
    for name in ("head.fc2.weight", "head.fc2.bias"):
        net.params[name].data[...] = 0.0
    net.params["head.fc2.bias"].data[k] = 10.0
    samples = [LabeledSample(s.pixels, k, s.source_id) for s in tiny_dataset.samples]
    result = evaluate(net, Dataset(samples, tiny_dataset.class_names), batch_size=5)
    assert result.accuracy == 1.0
    assert result.confusion.counts[k, k] == len(samples)
    # Ties among equal logits go to the lowest class id.
    net.params["head.fc2.bias"].data[...] = 0.0
    tied = evaluate(net, tiny_dataset)
    assert tied.confusion.counts[:, 0].sum() == len(tiny_dataset)


def test_evaluate_is_deterministic(make_run_config, tiny_dataset):
    result = train(make_run_config())
    a = evaluate(result.net, tiny_dataset, batch_size=5).confusion.counts
    b = evaluate(result.net, tiny_dataset, batch_size=12).confusion.counts
    np.testing.assert_array_equal(a, b)


def test_checkpoint_alone_rebuilds_the_model(make_run_config, tmp_path):
    result = train(make_run_config(standardize=True))
    path = os.path.join(result.checkpoint_dir, LAST_CHECKPOINT)
    loaded = load_model(path)
    assert loaded.epoch == 3
    assert loaded.class_names == ["class_0", "class_1", "class_2"]
    assert loaded.stats is not None
    for name, array in params_of(result.net).items():
        np.testing.assert_array_equal(loaded.net.params[name].data, array)
    assert evaluate_checkpoint(path).accuracy == result.final_accuracy

    ds = synth_dataset(1, num_classes=3, image_size=24, seed=3)
    paths = write_corpus(ds, tmp_path / "images")
    first = predict(path, paths[0])
    again = predict(path, paths[0])
    assert first.probabilities.shape == (3,)
    assert abs(first.probabilities.sum() - 1.0) < 1e-9
    np.testing.assert_array_equal(first.probabilities, again.probabilities)
    assert first.class_names == loaded.class_names
    assert first.class_name == loaded.class_names[first.label]


def test_predict_rejects_bad_inputs(make_run_config, tmp_path):
    result = train(make_run_config(epochs=2))
    path = os.path.join(result.checkpoint_dir, LAST_CHECKPOINT)
    broken = tmp_path / "broken.ppm"
    broken.write_bytes(b"P6\n4 4\n255\n")
    with pytest.raises(errors.IngestionError):
        predict(path, broken)
    truncated = tmp_path / "truncated.dsn"
    truncated.write_bytes(open(path, "rb").read()[:-10])
    with pytest.raises(errors.CheckpointCorruptError):
        predict(truncated, broken)


def test_gradcheck_passes_on_a_small_model():
    config = miniature_config(input_size=16, embed_dim=8)
    report = gradcheck(config, max_entries=4)
    assert report.passed, report.format()
    # One entry per layer; the relative-bias table is its own group.
    assert list(report.errors) == list(DualStreamNet(config).params.groups())
    assert "attn.blocks.0.attn" in report.errors
    assert "head.fc2" in report.errors
    assert "PASS" in report.format()


def test_gradcheck_catches_a_wrong_backward(monkeypatch):
    def wrong_backward(self, grad):
        return (grad * self.saved["cdf"],)

    monkeypatch.setattr(functional.GELU, "backward", wrong_backward)
    report = gradcheck(miniature_config(input_size=16, embed_dim=8), max_entries=4)
    assert not report.passed
    assert "FAIL" in report.format()


def test_miniature_config_defaults():
    config = miniature_config()
    assert (config.input_size, config.embed_dim, config.num_lmhsa_blocks) == (64, 16, 1)


def test_gradcheck_on_corpus_samples(tiny_dataset):
    config = miniature_config(input_size=16, embed_dim=8).model_copy(update={"num_classes": 3})
    report = gradcheck(config, data=tiny_dataset, max_entries=4)
    assert report.passed, report.format()
    with pytest.raises(errors.ConfigurationError, match="classes"):
        gradcheck(miniature_config(input_size=16, embed_dim=8), data=tiny_dataset)
    with pytest.raises(errors.ConfigurationError, match="samples"):
        gradcheck(config, batch_size=len(tiny_dataset) + 1, data=tiny_dataset)


def test_miniature_config_validates_sizes():
    with pytest.raises(errors.ConfigurationError):
        miniature_config(input_size=30)


@pytest.mark.slow
def test_full_model_gradcheck_at_acceptance_size():
    report = gradcheck(miniature_config(), batch_size=2, max_entries=None)
    assert report.checked == DualStreamNet(miniature_config()).num_parameters()
    assert report.passed, report.format()
    assert report.max_error < 1e-4


@pytest.mark.slow
def test_training_is_deterministic_at_acceptance_size(make_run_config):
    sizes = {"input_size": 64, "synth_per_class": 20, "batch_size": 8, "seed": 11}
    first = train(make_run_config("a", **sizes))
    second = train(make_run_config("b", **sizes))
    assert open(first.log_path, "rb").read() == open(second.log_path, "rb").read()
    assert first.records[-1].train_loss < first.records[0].train_loss


@pytest.mark.slow
def test_learns_the_synthetic_corpus(tmp_path):
    from dualstream.training import build_run_config

    cfg = build_run_config(
        {
            "input_size": 64,
            "stem_channels": 16,
            "embed_dim": 32,
            "num_lmhsa_blocks": 1,
            "num_heads": 4,
            "cnn_channels": "32,32,32,32",
            "synth_per_class": 250,
            "stratified": True,
            "epochs": 60,
            "warmup_epochs": 3,
            "batch_size": 32,
            "base_lr": 1e-3,
            "warmup_lr": 1e-5,
            "min_lr": 1e-4,
            "weight_decay": 0.05,
            "eval_every": 10,
            "out_dir": str(tmp_path / "demo"),
            "seed": 0,
        }
    )
    losses: dict[int, list[float]] = {}

    def record_loss(info):
        losses.setdefault(info.epoch, []).append(info.loss)

    result = train(cfg, on_step=record_loss)
    assert len(losses[0]) == 32
    assert np.mean(losses[9]) < np.mean(losses[0])
    assert result.final_accuracy >= 0.95
