import hashlib
import json
import re
import typing

import numpy as np

_KEY_PATTERN = re.compile(r"^[A-Za-z][A-Za-z0-9_\-]*$")


def normalize_key(key: str) -> str | None:
    """Map a config-file key or long CLI flag name to its field name.

    Returns None when `key` is not a valid identifier-like name.

    !!! example "Examples"
        ```python
        from dualstream.utils import normalize_key

        assert normalize_key("--batch-size") == "batch_size"
        assert normalize_key("warmup_lr") == "warmup_lr"
        assert normalize_key("2fast") is None
        ```
    """
    key = key.strip().removeprefix("--")
    if not _KEY_PATTERN.match(key):
        return None
    return key.replace("-", "_").lower()


def canonical_json(value: typing.Any) -> str:
    """Serialize `value` deterministically: sorted keys, no whitespace, repr floats."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_digest(value: typing.Any) -> bytes:
    return hashlib.sha256(canonical_json(value).encode("utf-8")).digest()


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (`seed`, `*stream`), e.g. one per epoch."""
    return np.random.default_rng([seed, *stream]) if stream else np.random.default_rng(seed)


def format_significant(value: float, digits: int = 9) -> str:
    """Format a float with `digits` significant digits, as used in the metrics log."""
    return f"{value:.{digits}g}"
