import pytest

from dualstream import errors
from dualstream.training import (
    ConfigEntry,
    RunConfig,
    build_run_config,
    config_hash,
    flatten_run_config,
    load_config_file,
    parse_config_text,
)


def test_parse_config_text_normalizes_keys_and_strips_comments():
    entries = parse_config_text(
        "# header\n\nbatch-size = 16\nBASE_LR=2e-3   # peak\ncnn_channels = 8, 8, 8, 8\n",
        source="run.cfg",
    )
    assert entries["batch_size"] == ConfigEntry("16", 3, "run.cfg")
    assert entries["base_lr"].value == "2e-3"
    assert entries["cnn_channels"].value == "8, 8, 8, 8"


def test_parse_config_text_reports_the_offending_line():
    with pytest.raises(errors.ConfigurationError, match="run.cfg:2: unknown config key 'batch_sise'"):
        parse_config_text("epochs = 3\nbatch_sise = 4\n", source="run.cfg")
    with pytest.raises(errors.ConfigurationError, match="run.cfg:1: expected"):
        parse_config_text("epochs 3\n", source="run.cfg")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epochs = 7\nsynth_per_class = 2\n", encoding="utf-8")
    cfg = build_run_config(load_config_file(path))
    assert cfg.schedule.total_epochs == 7
    assert cfg.synth.n_per_class == 2
    with pytest.raises(errors.ConfigurationError, match="Cannot read"):
        load_config_file(tmp_path / "missing.cfg")


def test_later_values_override_earlier_ones(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("batch_size = 8\nepochs = 4\nwarmup_epochs = 1\nsynth_per_class = 2\n", encoding="utf-8")
    values = dict(load_config_file(path))
    values["batch_size"] = "32"
    cfg = build_run_config(values)
    assert cfg.schedule.batch_size == 32
    assert cfg.schedule.total_epochs == 4


def test_seed_propagates_unless_given_explicitly():
    cfg = build_run_config({"seed": 9, "synth_per_class": 2})
    assert (cfg.seed, cfg.model.seed, cfg.split_seed, cfg.synth.seed) == (9, 9, 9, 9)
    cfg = build_run_config({"seed": 9, "model_seed": 1, "split_seed": 2, "synth_per_class": 2})
    assert (cfg.seed, cfg.model.seed, cfg.split_seed, cfg.synth.seed) == (9, 1, 2, 9)


def test_values_are_coerced_by_type():
    cfg = build_run_config(
        {
            "synth_per_class": "3",
            "cnn_channels": "16,16,32,32",
            "stratified": "true",
            "precision": "float32",
            "stop_after": "none",
        }
    )
    assert cfg.model.cnn_channels == (16, 16, 32, 32)
    assert cfg.stratified is True
    assert cfg.dtype.name == "float32"
    assert cfg.stop_after is None


def test_invalid_values_name_their_source():
    entries = parse_config_text("synth_per_class = 2\nbatch_size = 0\n", source="bad.cfg")
    with pytest.raises(errors.ConfigurationError, match=r"bad.cfg:2"):
        build_run_config(entries)
    with pytest.raises(errors.ConfigurationError, match="unknown config key"):
        build_run_config({"synth_per_class": 2, "learning_rate": 0.1})


def test_exactly_one_data_source():
    with pytest.raises(errors.ConfigurationError, match="exactly one"):
        build_run_config({})
    with pytest.raises(errors.ConfigurationError, match="exactly one"):
        build_run_config({"data_root": "cells", "synth_per_class": 2})


def test_config_hash_ignores_output_locations():
    a = build_run_config({"synth_per_class": 2, "out_dir": "a", "log_wall_time": False})
    b = build_run_config({"synth_per_class": 2, "out_dir": "b", "stop_after": 1})
    c = build_run_config({"synth_per_class": 2, "base_lr": 5e-4})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_flatten_round_trips():
    cfg = build_run_config(
        {"seed": 3, "synth_per_class": 5, "cnn_channels": "8,8,8,8", "epochs": 12, "augment": True}
    )
    flat = flatten_run_config(cfg)
    assert flat["cnn_channels"] == "8,8,8,8"
    assert flat["total_epochs"] == 12
    assert build_run_config(flat) == cfg


def test_run_config_defaults():
    cfg = RunConfig(synth={"n_per_class": 1})
    assert cfg.resolved_checkpoint_dir.endswith("checkpoints")
    assert cfg.resolved_log_path.endswith("metrics.csv")
    assert not cfg.augment_flags.flip
