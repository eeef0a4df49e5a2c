import numpy as np
import pytest

from pitl import netpbm


def test_ppm_round_trip(tmp_path):
    rng = np.random.Generator(np.random.PCG64(0))
    img = rng.uniform(0, 1, (7, 5, 3))
    path = tmp_path / "img.ppm"
    netpbm.write_ppm(path, img)
    back = netpbm.read_ppm(path)
    assert back.shape == (7, 5, 3)
    # 8-bit quantization: within half a step
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12


def test_ppm_quantized_values_round_trip_exactly(tmp_path):
    img = np.arange(256).reshape(16, 16)[:, :, None].repeat(3, axis=2) / 255.0
    path = tmp_path / "exact.ppm"
    netpbm.write_ppm(path, img)
    assert np.array_equal(netpbm.read_ppm(path), img)


def test_ppm_clamps_out_of_range(tmp_path):
    img = np.array([[[-1.0, 127 / 255, 2.0]]])
    path = tmp_path / "clamp.ppm"
    netpbm.write_ppm(path, img)
    assert np.array_equal(netpbm.read_ppm(path)[0, 0], [0.0, 127 / 255, 1.0])


def test_pgm_round_trip_and_comments(tmp_path):
    mask = (np.arange(30).reshape(5, 6) % 3 == 0).astype(np.uint8) * 255
    path = tmp_path / "mask.pgm"
    netpbm.write_pgm(path, mask)
    assert np.array_equal(netpbm.read_pgm(path), mask)
    # a header comment must be skipped
    with_comment = (tmp_path / "comment.pgm")
    body = path.read_bytes()
    with_comment.write_bytes(b"P5\n# a comment\n6 5\n255\n" + body.split(b"255\n", 1)[1])
    assert np.array_equal(netpbm.read_pgm(with_comment), mask)


def test_pfm_gray_round_trip_is_float32_exact(tmp_path):
    rng = np.random.Generator(np.random.PCG64(1))
    depth = rng.uniform(0, 10, (9, 4))
    path = tmp_path / "depth.pfm"
    netpbm.write_pfm(path, depth)
    back = netpbm.read_pfm(path)
    assert back.shape == depth.shape
    assert np.array_equal(back, depth.astype(np.float32).astype(np.float64))


def test_pfm_color_round_trip(tmp_path):
    rng = np.random.Generator(np.random.PCG64(2))
    img = rng.normal(0, 3, (6, 8, 3))
    path = tmp_path / "color.pfm"
    netpbm.write_pfm(path, img)
    back = netpbm.read_pfm(path)
    assert np.array_equal(back, img.astype(np.float32).astype(np.float64))


def test_pfm_row_order_is_bottom_up(tmp_path):
    # distinct rows so a flipped reader would fail
    depth = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    path = tmp_path / "rows.pfm"
    netpbm.write_pfm(path, depth)
    raw = path.read_bytes()
    header, body = raw.split(b"-1.0\n", 1)
    first_stored = np.frombuffer(body[:8], dtype="<f4")
    # bottom image row must be stored first
    assert np.array_equal(first_stored, np.array([5.0, 6.0], dtype=np.float32))
    assert np.array_equal(netpbm.read_pfm(path), depth)


def test_pfm_big_endian_read(tmp_path):
    depth = np.array([[1.5, -2.25]], dtype=">f4")
    path = tmp_path / "be.pfm"
    path.write_bytes(b"Pf\n2 1\n1.0\n" + depth.tobytes())
    assert np.array_equal(netpbm.read_pfm(path), [[1.5, -2.25]])


@pytest.mark.parametrize(
    "payload",
    [b"P6\n", b"P5\n2 2\n255\nxx", b"Pf\n2 2\n0.0\n" + b"\0" * 16, b"XX\n2 2\n255\n"],
)
def test_malformed_files_raise(tmp_path, payload):
    # each payload is invalid for every reader (wrong magic, truncation, or zero scale)
    path = tmp_path / "bad.bin"
    path.write_bytes(payload)
    for reader in (netpbm.read_ppm, netpbm.read_pgm, netpbm.read_pfm):
        with pytest.raises(netpbm.NetpbmError):
            reader(path)


def test_truncated_ppm_raises(tmp_path):
    path = tmp_path / "trunc.ppm"
    path.write_bytes(b"P6\n4 4\n255\n\x00\x01")
    with pytest.raises(netpbm.NetpbmError):
        netpbm.read_ppm(path)


def test_write_shape_errors(tmp_path):
    with pytest.raises(netpbm.NetpbmError):
        netpbm.write_ppm(tmp_path / "x.ppm", np.zeros((4, 4)))
    with pytest.raises(netpbm.NetpbmError):
        netpbm.write_pfm(tmp_path / "x.pfm", np.zeros((4, 4, 2)))
