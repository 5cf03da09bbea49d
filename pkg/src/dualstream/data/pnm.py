"""Binary Netpbm images (P5 graymap, P6 pixmap) and bilinear resizing.

Header fields are whitespace separated and may be interleaved with ``#``
comments running to the end of the line. A single whitespace byte separates
the maxval from the raster. Samples are one byte when maxval < 256 and two
big-endian bytes otherwise.
"""

import os
import typing

import numpy as np

from dualstream import errors

MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}
MAX_MAXVAL = 65535
_WHITESPACE = b" \t\n\r\v\f"


def _read_header(data: bytes, path: str | None) -> tuple[list[bytes], int]:
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1] in _WHITESPACE:
            pos += 1
        if pos >= len(data):
            raise errors.IngestionError("Truncated image header", path=path)
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while (
            pos < len(data)
            and data[pos : pos + 1] not in _WHITESPACE
            and data[pos : pos + 1] != b"#"
        ):
            pos += 1
        fields.append(data[start:pos])
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise errors.IngestionError("Missing whitespace after maxval", path=path)
    return fields, pos + 1


def decode_pnm(data: bytes, path: str | None = None) -> np.ndarray:
    """Decode P5/P6 bytes to float64 pixels [3,H,W] scaled into [0,1].

    Graymaps are replicated to three channels.

    !!! example "Examples"
        ```python
        from dualstream.data import decode_pnm

        image = decode_pnm(b"P5\\n# tiny\\n2 1\\n255\\n\\x00\\xff")
        assert image.shape == (3, 1, 2)
        assert image[:, 0, 1].tolist() == [1.0, 1.0, 1.0]
        ```
    """
    (magic, *dims), offset = _read_header(data, path)
    channels = MAGIC_CHANNELS.get(magic)
    if channels is None:
        raise errors.IngestionError(f"Unsupported image magic {magic!r}", path=path)
    try:
        width, height, maxval = (int(v) for v in dims)
    except ValueError:
        raise errors.IngestionError(f"Non-numeric image header fields {dims}", path=path) from None
    if width < 1 or height < 1 or not 0 < maxval <= MAX_MAXVAL:
        raise errors.IngestionError(
            f"Invalid image header: {width}x{height} maxval {maxval}", path=path
        )
    sample = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    expected = count * sample.itemsize
    raster = data[offset : offset + expected]
    if len(raster) < expected:
        raise errors.IngestionError(
            f"Raster truncated: expected {expected} bytes, found {len(raster)}", path=path
        )
    values = np.frombuffer(raster, dtype=sample, count=count).astype(np.float64)
    if values.max(initial=0.0) > maxval:
        raise errors.IngestionError(f"Sample exceeds maxval {maxval}", path=path)
    image = (values / maxval).reshape(height, width, channels).transpose(2, 0, 1)
    if channels == 1:
        image = np.repeat(image, 3, axis=0)
    return np.ascontiguousarray(image)


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    path = os.fspath(path)
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise errors.IngestionError(f"Cannot read image: {e}", path=path) from e
    return decode_pnm(data, path)


def encode_pnm(pixels: np.ndarray, maxval: int = 255) -> bytes:
    """Encode [C,H,W] pixels in [0,1] as P6 (C=3) or P5 (C=1)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[0] not in (1, 3):
        raise errors.ConfigurationError(
            f"encode_pnm expects pixels [1|3,H,W], got {pixels.shape}"
        )
    if not 0 < maxval <= MAX_MAXVAL:
        raise errors.ConfigurationError(f"maxval must be in 1..{MAX_MAXVAL}, got {maxval}")
    channels, height, width = pixels.shape
    magic = b"P6" if channels == 3 else b"P5"
    sample = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    quantized = np.rint(np.clip(pixels, 0.0, 1.0) * maxval).astype(sample)
    header = magic + f"\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + quantized.transpose(1, 2, 0).tobytes()


def write_pnm(path: str | os.PathLike, pixels: np.ndarray, maxval: int = 255) -> None:
    with open(path, "wb") as f:
        f.write(encode_pnm(pixels, maxval))


def _axis_weights(size_in: int, size_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel centers, clamped to the border samples.
    src = (np.arange(size_out) + 0.5) * (size_in / size_out) - 0.5
    src = np.clip(src, 0.0, size_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, size_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    """Bilinear resize of [C,H,W] to `size` with half-pixel centers.

    Equal input and output sizes return an exact copy.
    """
    out_h, out_w = (size, size) if isinstance(size, int) else size
    _, in_h, in_w = image.shape
    if (in_h, in_w) == (out_h, out_w):
        return np.array(image, copy=True)
    r0, r1, fy = _axis_weights(in_h, out_h)
    c0, c1, fx = _axis_weights(in_w, out_w)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    top = image[:, r0][:, :, c0] * (1 - fx) + image[:, r0][:, :, c1] * fx
    bottom = image[:, r1][:, :, c0] * (1 - fx) + image[:, r1][:, :, c1] * fx
    return top * (1 - fy) + bottom * fy


PNM_SUFFIXES: typing.Final = (".ppm", ".pgm", ".pnm")
