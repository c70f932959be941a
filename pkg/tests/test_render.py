import json

import numpy as np
import pytest

from qdtune.render import read_pnm, read_tensor, to_gray, write_pgm, write_ppm, write_tensor


def test_to_gray_range():
    g = to_gray(np.array([[-1.0, 0.0, 1.0]]))
    np.testing.assert_array_equal(g, [[0, 128, 255]])
    assert not to_gray(np.full((2, 2), 3.0)).any()


def test_pgm_roundtrip(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = write_pgm(tmp_path / "a.pgm", img)
    assert path.read_bytes().startswith(b"P5\n4 3\n255\n")
    np.testing.assert_array_equal(read_pnm(path), img)


def test_ppm_roundtrip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    np.testing.assert_array_equal(read_pnm(write_ppm(tmp_path / "a.ppm", img)), img)


def test_writers_validate_input(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.zeros((2, 2), float))
    with pytest.raises(ValueError):
        write_ppm(tmp_path / "x.ppm", np.zeros((2, 2), np.uint8))


def test_tensor_roundtrip_and_layout(tmp_path):
    arr = np.random.default_rng(1).normal(size=(4, 5, 3))
    path = write_tensor(tmp_path / "t", arr)
    header = json.loads((tmp_path / "t.json").read_text())
    assert header["shape"] == [4, 5, 3] and header["byte_order"] == "little"
    raw = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(4, 5, 3)
    np.testing.assert_array_equal(raw, arr.astype(np.float32))
    np.testing.assert_array_equal(read_tensor(tmp_path / "t"), raw)


def test_tensor_crc_detects_corruption(tmp_path):
    path = write_tensor(tmp_path / "t", np.ones(8))
    data = bytearray(path.read_bytes())
    data[0] ^= 1
    path.write_bytes(bytes(data))
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "t")
