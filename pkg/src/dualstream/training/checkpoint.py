"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"DSN1"  u32 version  32-byte config hash  u32 record count
    record*: u32 name length, name (UTF-8)
             u16 dtype length, dtype (numpy string such as "<f8", or "json")
             u32 ndim, u64 extent per dimension
             u64 payload length, payload (raw little-endian values or UTF-8 JSON)

Parameters and buffers are stored under their `ParamStore` names, optimizer
moments as ``opt.m.<name>`` and ``opt.v.<name>``, and run metadata as a final
``__meta__`` JSON record. Writing is deterministic, so save → load → save
yields identical bytes.
"""

import json
import logging
import os
import struct
import tempfile
import typing
from dataclasses import dataclass, field

import numpy as np
from typing_extensions import TypedDict

from dualstream import errors
from dualstream.model import ParamStore
from dualstream.optim import AdamWState
from dualstream.utils import canonical_json

logger = logging.getLogger(__name__)

MAGIC = b"DSN1"
FORMAT_VERSION = 1
HASH_SIZE = 32
META_RECORD = "__meta__"
JSON_DTYPE = "json"
MOMENT_PREFIXES = ("opt.m.", "opt.v.")


class CheckpointMeta(TypedDict, total=False):
    """Run state stored next to the tensors."""

    config: dict[str, typing.Any]
    """`RunConfig.model_dump(mode="json")` of the run that wrote the file."""

    class_names: list[str]
    epoch: int
    """Completed epochs."""

    step: int
    """Optimizer steps taken."""

    best_accuracy: float | None
    best_epoch: int | None
    channel_stats: dict[str, list[float]] | None


@dataclass
class Checkpoint:
    cfg_hash: bytes
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    meta: CheckpointMeta = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {
            name: array
            for name, array in self.arrays.items()
            if not name.startswith(MOMENT_PREFIXES)
        }

    def optimizer_states(self) -> dict[str, AdamWState]:
        step = int(self.meta.get("step", 0))
        states = {}
        for name, m in self.arrays.items():
            if name.startswith("opt.m."):
                param = name[len("opt.m.") :]
                v = self.arrays.get(f"opt.v.{param}")
                if v is None:
                    raise errors.CheckpointCorruptError(f"Missing second moment for {param}")
                states[param] = AdamWState(m=m.copy(), v=v.copy(), t=step)
        return states


def _array_record(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array)
    little = array.astype(array.dtype.newbyteorder("<"), copy=False)
    return _record(name, little.dtype.str, array.shape, little.tobytes())


def _record(name: str, dtype: str, shape: tuple[int, ...], payload: bytes) -> bytes:
    name_bytes, dtype_bytes = name.encode("utf-8"), dtype.encode("ascii")
    parts = [
        struct.pack("<I", len(name_bytes)),
        name_bytes,
        struct.pack("<H", len(dtype_bytes)),
        dtype_bytes,
        struct.pack("<I", len(shape)),
        struct.pack(f"<{len(shape)}Q", *shape),
        struct.pack("<Q", len(payload)),
        payload,
    ]
    return b"".join(parts)


def encode_checkpoint(
    params: ParamStore,
    states: typing.Mapping[str, AdamWState],
    meta: CheckpointMeta,
    cfg_hash: bytes,
) -> bytes:
    if len(cfg_hash) != HASH_SIZE:
        raise errors.ConfigurationError(f"Config hash must be {HASH_SIZE} bytes")
    records = [_array_record(name, t.data) for name, t in params.items()]
    for name, _ in params.trainable():
        state = states.get(name)
        if state is not None:
            records.append(_array_record(f"opt.m.{name}", state.m))
            records.append(_array_record(f"opt.v.{name}", state.v))
    records.append(_record(META_RECORD, JSON_DTYPE, (), canonical_json(meta).encode("utf-8")))
    header = MAGIC + struct.pack("<I", FORMAT_VERSION) + cfg_hash + struct.pack("<I", len(records))
    return header + b"".join(records)


class _Reader:
    def __init__(self, data: bytes, path: str | None):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise errors.CheckpointCorruptError(
                f"Checkpoint truncated at byte {self.pos} (needed {n} more)"
                + (f": {self.path}" if self.path else "")
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes, path: str | None = None) -> Checkpoint:
    reader = _Reader(data, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise errors.CheckpointCorruptError(f"Not a checkpoint file (bad magic): {path}")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise errors.CheckpointVersionError(
            f"Checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    checkpoint = Checkpoint(cfg_hash=reader.take(HASH_SIZE), version=version)
    (count,) = reader.unpack("<I")
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (dtype_len,) = reader.unpack("<H")
        dtype = reader.take(dtype_len).decode("ascii")
        (ndim,) = reader.unpack("<I")
        shape = reader.unpack(f"<{ndim}Q")
        (size,) = reader.unpack("<Q")
        payload = reader.take(size)
        if dtype == JSON_DTYPE:
            try:
                checkpoint.meta = json.loads(payload.decode("utf-8"))
            except ValueError as e:
                raise errors.CheckpointCorruptError(f"Unreadable metadata record: {e}") from e
            continue
        try:
            np_dtype = np.dtype(dtype)
            array = np.frombuffer(payload, dtype=np_dtype).reshape(shape)
        except (TypeError, ValueError) as e:
            raise errors.CheckpointCorruptError(f"Bad record {name!r}: {e}") from e
        checkpoint.arrays[name] = array.astype(np_dtype.newbyteorder("="), copy=True)
    if reader.pos != len(data):
        raise errors.CheckpointCorruptError(
            f"{len(data) - reader.pos} trailing bytes after the last record"
        )
    return checkpoint


def save_checkpoint(
    path: str | os.PathLike,
    params: ParamStore,
    states: typing.Mapping[str, AdamWState],
    meta: CheckpointMeta,
    cfg_hash: bytes,
) -> None:
    """Write a checkpoint atomically (temporary file, then rename).

    Raises:
        CheckpointWriteError: If the file cannot be written; any previous file
            at `path` is left untouched.
    """
    path = os.fspath(path)
    payload = encode_checkpoint(params, states, meta, cfg_hash)
    directory = os.path.dirname(path) or "."
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise errors.CheckpointWriteError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug(f"Wrote checkpoint {path} ({len(payload)} bytes)")


def load_checkpoint(
    path: str | os.PathLike,
    expected_hash: bytes | None = None,
    *,
    force: bool = False,
) -> Checkpoint:
    """Read a checkpoint, optionally requiring it to match `expected_hash`.

    Raises:
        CheckpointCorruptError: Truncated or malformed file.
        CheckpointVersionError: Unsupported format version.
        CheckpointConfigMismatchError: Hash differs and `force` is not set.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise errors.CheckpointCorruptError(f"Cannot read checkpoint {path}: {e}") from e
    checkpoint = decode_checkpoint(data, path)
    if expected_hash is not None and checkpoint.cfg_hash != expected_hash:
        message = (
            f"Checkpoint {path} was written under config {checkpoint.cfg_hash.hex()[:12]}, "
            f"current config is {expected_hash.hex()[:12]}"
        )
        if not force:
            raise errors.CheckpointConfigMismatchError(message)
        logger.warning(f"{message}; loading anyway")
    return checkpoint


def restore(
    checkpoint: Checkpoint,
    params: ParamStore,
    states: typing.MutableMapping[str, AdamWState] | None = None,
) -> None:
    """Copy stored tensors (and optimizer moments, when `states` is given) in place."""
    try:
        params.load_arrays(checkpoint.parameter_arrays())
    except errors.ConfigurationError as e:
        raise errors.CheckpointCorruptError(f"Checkpoint does not fit the model: {e}") from e
    if states is not None:
        states.clear()
        states.update(checkpoint.optimizer_states())
