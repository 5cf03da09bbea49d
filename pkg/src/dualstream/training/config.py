import logging
import os
import typing

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dualstream import errors
from dualstream.data import AugmentFlags
from dualstream.model import ModelConfig
from dualstream.optim import ScheduleConfig
from dualstream.utils import normalize_key, sha256_digest

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "runs"
DEFAULT_EVAL_EVERY = 1
CHECKPOINT_SUBDIR = "checkpoints"
METRICS_FILE = "metrics.csv"

Precision = typing.Literal["float64", "float32"]

# Fields that do not change the training trajectory; left out of the config hash.
UNHASHED_FIELDS = frozenset(
    {
        "out_dir",
        "checkpoint_dir",
        "log_path",
        "eval_every",
        "stop_after",
        "keep_every",
        "log_wall_time",
    }
)


class SynthSpec(BaseModel):
    """Synthetic corpus used instead of an image directory."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_per_class: int = Field(gt=0)
    seed: int = 0


class RunConfig(BaseModel):
    """Everything a training run depends on.

    Exactly one of `data_root` and `synth` names the data source. The synthetic
    corpus takes its class count and image size from `model`.

    !!! example "Examples"
        ```python
        from dualstream.training import RunConfig, config_hash

        a = RunConfig(synth={"n_per_class": 4}, out_dir="run-a")
        b = RunConfig(synth={"n_per_class": 4}, out_dir="run-b")
        assert config_hash(a) == config_hash(b)
        assert len(config_hash(a)) == 32
        ```
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    data_root: str | None = None
    synth: SynthSpec | None = None
    seed: int = 0
    """Seeds batch shuffling and augmentation."""

    split_seed: int = 0
    train_fraction: float = Field(default=0.8, ge=0.0, le=1.0)
    stratified: bool = False
    augment: bool = False
    standardize: bool = False
    precision: Precision = "float64"
    on_error: typing.Literal["abort", "skip"] = "abort"
    eval_every: int = Field(default=DEFAULT_EVAL_EVERY, ge=1)
    out_dir: str = DEFAULT_OUT_DIR
    checkpoint_dir: str | None = None
    log_path: str | None = None
    stop_after: int | None = Field(default=None, ge=1)
    """Stop after this many epochs of the current invocation; the schedule still spans total_epochs."""

    keep_every: int = Field(default=0, ge=0)
    log_wall_time: bool = True

    @model_validator(mode="after")
    def _check_data_source(self) -> "RunConfig":
        if (self.data_root is None) == (self.synth is None):
            raise ValueError("exactly one of data_root and synth must be set")
        return self

    @property
    def resolved_checkpoint_dir(self) -> str:
        return self.checkpoint_dir or os.path.join(self.out_dir, CHECKPOINT_SUBDIR)

    @property
    def resolved_log_path(self) -> str:
        return self.log_path or os.path.join(self.out_dir, METRICS_FILE)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    @property
    def augment_flags(self) -> AugmentFlags:
        return AugmentFlags(flip=self.augment, rotate=self.augment, shift=self.augment)


def config_hash(cfg: RunConfig) -> bytes:
    """SHA-256 of the canonical JSON of every trajectory-affecting field."""
    return sha256_digest(cfg.model_dump(mode="json", exclude=set(UNHASHED_FIELDS)))


# Flat key → (section, field). "seed" is handled separately.
_MODEL_KEYS = {name: ("model", name) for name in ModelConfig.model_fields if name != "seed"}
_SCHEDULE_KEYS = {name: ("schedule", name) for name in ScheduleConfig.model_fields}
_RUN_KEYS = {
    name: ("run", name)
    for name in RunConfig.model_fields
    if name not in ("model", "schedule", "synth")
}
FLAT_KEYS: dict[str, tuple[str, str]] = {
    **_MODEL_KEYS,
    **_SCHEDULE_KEYS,
    **_RUN_KEYS,
    "epochs": ("schedule", "total_epochs"),
    "model_seed": ("model", "seed"),
    "synth_per_class": ("synth", "n_per_class"),
    "synth_seed": ("synth", "seed"),
}
_LIST_KEYS = frozenset({"cnn_channels"})


class ConfigEntry(typing.NamedTuple):
    value: str
    line: int | None = None
    source: str | None = None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, ConfigEntry]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    !!! example "Examples"
        ```python
        from dualstream.training import parse_config_text

        entries = parse_config_text("# run\\nbatch-size = 32\\nbase_lr = 1e-3  # peak\\n")
        assert entries["batch_size"].value == "32"
        assert entries["base_lr"].line == 3
        ```
    """
    entries: dict[str, ConfigEntry] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise errors.ConfigurationError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        key, value = (part.strip() for part in line.split("=", 1))
        name = normalize_key(key)
        if name is None or name not in FLAT_KEYS and name != "seed":
            raise errors.ConfigurationError(f"{source}:{lineno}: unknown config key {key!r}")
        entries[name] = ConfigEntry(value, lineno, source)
    return entries


def load_config_file(path: str | os.PathLike) -> dict[str, ConfigEntry]:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise errors.ConfigurationError(f"Cannot read config file {path}: {e}") from e
    return parse_config_text(text, source=path)


def _coerce(name: str, value: typing.Any) -> typing.Any:
    if name in _LIST_KEYS and isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if isinstance(value, str) and value.lower() in ("none", ""):
        return None
    return value


def build_run_config(
    values: typing.Mapping[str, typing.Any | ConfigEntry],
) -> RunConfig:
    """Assemble a `RunConfig` from flat keys.

    Values may be plain (from the command line) or `ConfigEntry` objects (from a
    file), and are converted by pydantic. ``seed`` also seeds model init, the
    split and the synthetic corpus unless those seeds are given explicitly.

    Raises:
        ConfigurationError: On unknown keys or values that fail validation.
    """
    sections: dict[str, dict[str, typing.Any]] = {"model": {}, "schedule": {}, "run": {}, "synth": {}}
    where: dict[str, str] = {}
    for raw_key, raw in values.items():
        name = normalize_key(raw_key)
        entry = raw if isinstance(raw, ConfigEntry) else ConfigEntry(raw)
        if entry.line is not None:
            where[name or raw_key] = f"{entry.source}:{entry.line}"
        if name == "seed":
            continue
        if name not in FLAT_KEYS:
            loc = where.get(name or raw_key, "command line")
            raise errors.ConfigurationError(f"{loc}: unknown config key {raw_key!r}")
        section, field = FLAT_KEYS[name]
        sections[section][field] = _coerce(name, entry.value)

    seed_raw = next(
        (v for k, v in values.items() if normalize_key(k) == "seed"), None
    )
    if seed_raw is not None:
        seed = seed_raw.value if isinstance(seed_raw, ConfigEntry) else seed_raw
        sections["run"]["seed"] = seed
        sections["model"].setdefault("seed", seed)
        sections["run"].setdefault("split_seed", seed)
        if sections["synth"]:
            sections["synth"].setdefault("seed", seed)

    run = dict(sections["run"])
    run["model"] = sections["model"]
    run["schedule"] = sections["schedule"]
    if sections["synth"]:
        run["synth"] = sections["synth"]
    try:
        return RunConfig(**run)
    except ValidationError as e:
        located = [
            f"{'.'.join(str(p) for p in err['loc'])}"
            + (f" ({where[str(err['loc'][-1])]})" if str(err["loc"][-1]) in where else "")
            + f": {err['msg']}"
            for err in e.errors()
        ]
        raise errors.ConfigurationError("Invalid run configuration: " + "; ".join(located)) from e


def flatten_run_config(cfg: RunConfig) -> dict[str, typing.Any]:
    """Inverse of `build_run_config`: flat keys with JSON-compatible values."""
    dumped = cfg.model_dump(mode="json")
    flat: dict[str, typing.Any] = {}
    for key, (section, field) in FLAT_KEYS.items():
        if key == "epochs":
            continue
        if section == "run":
            value = dumped[field]
        elif section == "synth":
            if dumped["synth"] is None:
                continue
            value = dumped["synth"][field]
        else:
            value = dumped[section][field]
        if value is None:
            continue
        flat[key] = ",".join(str(v) for v in value) if isinstance(value, list) else value
    return flat
