import numpy as np
import pytest

from cycnn.pnm import PNMError, encode_pnm, parse_pnm, read_pnm, write_pnm


def test_pgm_round_trip_is_byte_exact(tmp_path, rng):
    q = rng.integers(0, 256, size=(1, 7, 9))
    img = q / 255.0
    path = tmp_path / "a.pgm"
    write_pnm(path, img)
    back = read_pnm(path)
    assert back.shape == (1, 7, 9)
    np.testing.assert_array_equal(np.rint(back * 255), q)
    assert encode_pnm(back) == path.read_bytes()


def test_ppm_channel_order(tmp_path):
    img = np.zeros((3, 2, 2))
    img[0, 0, 0] = 1.0   # red top-left
    img[2, 1, 1] = 1.0   # blue bottom-right
    buf = encode_pnm(img)
    assert buf.startswith(b"P6")
    np.testing.assert_array_equal(parse_pnm(buf), img.astype(np.float32))


def test_header_comments_and_maxval():
    buf = b"P5\n# made by hand\n2 1\n# another\n15\n" + bytes([0, 15])
    np.testing.assert_allclose(parse_pnm(buf), [[[0.0, 1.0]]])


@pytest.mark.parametrize("buf, msg", [
    (b"P3\n1 1\n255\n0", "magic"),
    (b"P5\n2 2\n255\n" + bytes(3), "truncated"),
    (b"P5\n2", "truncated"),
    (b"P5\n2 2\n65535\n" + bytes(8), "maxval"),
])
def test_parse_errors(buf, msg):
    with pytest.raises(PNMError, match=msg):
        parse_pnm(buf)
