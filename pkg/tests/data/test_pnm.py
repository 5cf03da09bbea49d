import numpy as np
import pytest

from dualstream import errors
from dualstream.data import decode_pnm, encode_pnm, read_pnm, resize_bilinear, write_pnm


def test_decode_pixmap():
    data = b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 51, 255])
    image = decode_pnm(data)
    assert image.shape == (3, 1, 2)
    np.testing.assert_allclose(image[:, 0, 0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(image[:, 0, 1], [0.0, 0.2, 1.0])


def test_decode_comments_and_sixteen_bit_samples():
    data = b"P5 # gray\n# size follows\n1 2 # w h\n65535\n" + bytes([0xFF, 0xFF, 0x80, 0x00])
    image = decode_pnm(data)
    assert image.shape == (3, 2, 1)
    np.testing.assert_allclose(image[0, :, 0], [1.0, 32768 / 65535])
    # Graymaps are replicated to three identical channels.
    np.testing.assert_array_equal(image[0], image[2])


@pytest.mark.parametrize(
    "data, message",
    [
        (b"P3\n1 1\n255\n\x00\x00\x00", "magic"),
        (b"P6\n2 2\n255\n\x00\x00\x00", "truncated"),
        (b"P5\n1 1\n10\n\x0b", "exceeds"),
        (b"P5\n1 1\n255", "whitespace"),
        (b"P5\nx 1\n255\n\x00", "Non-numeric"),
        (b"P5\n0 1\n255\n", "Invalid"),
        (b"P5\n1", "Truncated"),
    ],
)
def test_malformed_images(data, message):
    with pytest.raises(errors.IngestionError, match=message):
        decode_pnm(data, path="broken.pgm")


def test_read_errors_carry_the_path(tmp_path):
    missing = tmp_path / "nope.ppm"
    with pytest.raises(errors.IngestionError) as excinfo:
        read_pnm(missing)
    assert excinfo.value.path == str(missing)


def test_write_then_read_quantizes_to_maxval(tmp_path, rng):
    pixels = rng.integers(0, 256, size=(3, 4, 5)) / 255.0
    path = tmp_path / "img.ppm"
    write_pnm(path, pixels)
    assert path.read_bytes().startswith(b"P6\n5 4\n255\n")
    np.testing.assert_allclose(read_pnm(path), pixels, atol=1e-12)

    gray = encode_pnm(np.full((1, 2, 2), 0.5), maxval=1000)
    assert gray.startswith(b"P5\n2 2\n1000\n")
    np.testing.assert_allclose(decode_pnm(gray), 0.5)


def test_encode_rejects_bad_input():
    with pytest.raises(errors.ConfigurationError):
        encode_pnm(np.zeros((2, 2, 2)))
    with pytest.raises(errors.ConfigurationError):
        encode_pnm(np.zeros((3, 2, 2)), maxval=70000)


def test_resize_equal_size_is_a_copy(rng):
    image = rng.random((3, 6, 6))
    out = resize_bilinear(image, 6)
    np.testing.assert_array_equal(out, image)
    assert out is not image


def test_resize_halving_averages_blocks(rng):
    image = rng.random((3, 4, 4))
    out = resize_bilinear(image, 2)
    blocks = image.reshape(3, 2, 2, 2, 2).mean(axis=(2, 4))
    np.testing.assert_allclose(out, blocks)


def test_resize_doubling_uses_half_pixel_centers():
    image = np.array([[[0.0, 1.0]]]).repeat(2, axis=1)
    out = resize_bilinear(image, (2, 4))
    np.testing.assert_allclose(out[0, 0], [0.0, 0.25, 0.75, 1.0])


def test_resize_checkerboard_interpolates_between_neighbours():
    board = np.indices((4, 4)).sum(axis=0) % 2
    image = np.stack([board, board, 1 - board]).astype(np.float64)
    taps = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.75, 0.25, 0.0, 0.0],
            [0.25, 0.75, 0.0, 0.0],
            [0.0, 0.75, 0.25, 0.0],
            [0.0, 0.25, 0.75, 0.0],
            [0.0, 0.0, 0.75, 0.25],
            [0.0, 0.0, 0.25, 0.75],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    out = resize_bilinear(image, 8)
    assert out.shape == (3, 8, 8)
    np.testing.assert_allclose(out[0], taps @ board @ taps.T, atol=1e-12)
    np.testing.assert_allclose(out[2], 1 - out[0], atol=1e-12)
    assert out[0, 1, 1] == pytest.approx(0.375)
    assert out[0, 0, 1] == pytest.approx(0.25)
    assert out[0, 0, 7] == pytest.approx(1.0)
