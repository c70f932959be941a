import json
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qdtune.dataset import (
    MANIFEST,
    SAMPLES,
    ChecksumMismatchError,
    CorruptManifestError,
    GenerationConfig,
    TruncatedRecordError,
    generate_dataset,
    gradient_image,
    load_dataset,
    make_sample,
    record_dtype,
    split_indices,
)
from qdtune.dqc import QualityThresholds
from qdtune.simcore import STATES


def fd_oracle(sensor, pitch):
    """Second implementation of dS/dV_P1: explicit loops."""
    h, w = sensor.shape
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            if j == 0:
                out[i, j] = (sensor[i, 1] - sensor[i, 0]) / pitch
            elif j == w - 1:
                out[i, j] = (sensor[i, j] - sensor[i, j - 1]) / pitch
            else:
                out[i, j] = (sensor[i, j + 1] - sensor[i, j - 1]) / (2 * pitch)
    return out


@pytest.fixture(scope="module")
def noiseless(tmp_path_factory):
    return generate_dataset("noiseless", 10, 3, tmp_path_factory.mktemp("nl"))


def test_record_layout():
    dt = record_dtype((30, 30))
    assert dt.itemsize == 2 * 30 * 30 * 4 + 5 * 4 + 1 + 4
    assert dt.names == ("sensor", "gradient", "state_label", "quality", "noise_scale")


def test_gradient_constant_and_linear():
    assert not gradient_image(np.full((5, 6), 3.0), 2.0).any()
    v1 = np.arange(8) * 2.0
    np.testing.assert_allclose(gradient_image(np.tile(0.7 * v1, (4, 1)), 2.0), 0.7)
    with pytest.raises(ValueError):
        gradient_image(np.zeros((3, 1)), 1.0)


def test_gradient_matches_oracle():
    s = make_sample("combined", 4, 0, GenerationConfig())["sensor"].astype(float)
    np.testing.assert_allclose(gradient_image(s, 2.0), fd_oracle(s, 2.0), atol=1e-12)


def test_noiseless_roundtrip_and_determinism(noiseless, tmp_path):
    ds = load_dataset(noiseless)
    assert len(ds) == 10
    for i, sample in enumerate(ds):
        ref = make_sample("noiseless", 3, i, GenerationConfig())
        assert sample.sensor.tobytes() == ref["sensor"].tobytes()
        assert sample.gradient.tobytes() == ref["gradient"].tobytes()
        assert sample.noise_params is None and sample.noise_scale == 0.0
        assert sample.quality_label is None
        assert abs(sample.state_label.sum() - 1) < 1e-6
    again = generate_dataset("noiseless", 10, 3, tmp_path / "again")
    for name in (MANIFEST, SAMPLES):
        assert (again / name).read_bytes() == (noiseless / name).read_bytes()


def test_parallel_generation_is_identical(tmp_path):
    a = generate_dataset("combined", 300, 1, tmp_path / "a", workers=1)
    b = generate_dataset("combined", 300, 1, tmp_path / "b", workers=2)
    assert (a / SAMPLES).read_bytes() == (b / SAMPLES).read_bytes()
    assert (a / MANIFEST).read_bytes() == (b / MANIFEST).read_bytes()


def test_per_noise_white_only(tmp_path):
    ds = load_dataset(generate_dataset("per-noise:white", 5, 2, tmp_path))
    for s in ds:
        assert s.noise_params.enabled == {k: k == "white" for k in s.noise_params.enabled}


def test_threshold_sweep_scales_uniform(tmp_path):
    a = load_dataset(generate_dataset("threshold-sweep", 400, 6, tmp_path)).arrays()
    s = a["noise_scale"].astype(float)
    assert s.min() >= 0 and s.max() <= 7
    assert stats.kstest(s, stats.uniform(0, 7).cdf).pvalue > 0.01


def test_dqc_labeled_requires_thresholds(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset("dqc-labeled", 5, 0, tmp_path)
    th = QualityThresholds({s: 1.0 for s in STATES}, {s: 3.0 for s in STATES})
    ds = load_dataset(generate_dataset("dqc-labeled", 40, 0, tmp_path, GenerationConfig(thresholds=th.to_dict())))
    for s in ds:
        expected = "high" if s.noise_scale < 1 else "moderate" if s.noise_scale < 3 else "low"
        assert s.quality_label == expected


def test_unknown_kind_and_bad_count(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset("speckle", 5, 0, tmp_path)
    with pytest.raises(ValueError):
        generate_dataset("noiseless", 0, 0, tmp_path)


def test_infeasible_config_rejected_before_writing(tmp_path):
    config = GenerationConfig(center_range=(-25.0, 400.0))
    with pytest.raises(ValueError, match="occupancy"):
        generate_dataset("noiseless", 5, 0, tmp_path / "bad", config)
    assert not (tmp_path / "bad").exists()


def test_truncated_file_names_record(noiseless, tmp_path):
    import shutil

    bad = tmp_path / "trunc"
    shutil.copytree(noiseless, bad)
    data = (bad / SAMPLES).read_bytes()
    size = record_dtype((30, 30)).itemsize
    (bad / SAMPLES).write_bytes(data[: 7 * size + 100])
    with pytest.raises(TruncatedRecordError) as info:
        load_dataset(bad)
    assert info.value.index == 7


def test_checksum_mismatch_names_record(noiseless, tmp_path):
    import shutil

    bad = tmp_path / "flip"
    shutil.copytree(noiseless, bad)
    data = bytearray((bad / SAMPLES).read_bytes())
    size = record_dtype((30, 30)).itemsize
    data[4 * size + 17] ^= 0xFF
    (bad / SAMPLES).write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatchError) as info:
        load_dataset(bad)
    assert info.value.index == 4


@pytest.mark.parametrize("mutate", [
    lambda m: m.pop("records"),
    lambda m: m.update(format="other/1"),
    lambda m: m["records"][3].update(offset=1),
    lambda m: m.update(sample_count=11),
])
def test_corrupt_manifest(noiseless, tmp_path, mutate):
    import shutil

    bad = tmp_path / "m"
    shutil.copytree(noiseless, bad)
    m = json.loads((bad / MANIFEST).read_text())
    mutate(m)
    (bad / MANIFEST).write_text(json.dumps(m))
    with pytest.raises(CorruptManifestError):
        load_dataset(bad)


def test_unparseable_manifest(noiseless, tmp_path):
    import shutil

    bad = tmp_path / "garbage"
    shutil.copytree(noiseless, bad)
    (bad / MANIFEST).write_text("{not json")
    with pytest.raises(CorruptManifestError):
        load_dataset(bad)


def test_manifest_contents(noiseless):
    m = json.loads((noiseless / MANIFEST).read_text())
    assert m["dtype"] == "float32" and m["byte_order"] == "little" and m["layout"] == "row-major"
    offsets = [r["offset"] for r in m["records"]]
    assert all(b > a for a, b in zip(offsets, offsets[1:]))
    assert (noiseless / SAMPLES).stat().st_size == m["sample_count"] * m["record_size"]
    raw = (noiseless / SAMPLES).read_bytes()
    r = m["records"][2]
    assert zlib.crc32(raw[r["offset"] : r["offset"] + m["record_size"]]) == r["crc32"]


def test_raw_layout_readable_without_package(noiseless):
    m = json.loads((noiseless / MANIFEST).read_text())
    h, w = m["image_shape"]
    raw = (noiseless / SAMPLES).read_bytes()[: m["record_size"]]
    sensor = np.frombuffer(raw[: 4 * h * w], dtype="<f4").reshape(h, w)
    label = np.frombuffer(raw[8 * h * w : 8 * h * w + 20], dtype="<f4")
    ds = load_dataset(noiseless)
    np.testing.assert_array_equal(sensor, ds[0].sensor)
    np.testing.assert_array_equal(label, ds[0].state_label)
    assert raw[8 * h * w + 20] == 255


def test_split_determinism_and_disjointness(noiseless):
    ds = load_dataset(noiseless)
    a, b = ds.split(), ds.split()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


@settings(max_examples=50)
@given(st.integers(1, 500), st.integers(0, 2**31))
def test_splits_partition(n, seed):
    s = split_indices(n, (0.8, 0.1, 0.1), seed)
    allidx = np.concatenate(list(s.values()))
    assert len(allidx) == n and len(np.unique(allidx)) == n


def test_config_validation():
    with pytest.raises(ValueError):
        GenerationConfig(split_fractions=(0.5, 0.2, 0.2)).validate()
    with pytest.raises(ValueError):
        GenerationConfig(pitch=0).validate()
    c = GenerationConfig()
    assert GenerationConfig.from_dict(c.to_dict()).to_dict() == c.to_dict()
