"""Labelled datasets of simulated scans in a manifest + raw-binary container.

A dataset directory holds ``manifest.json`` and ``samples.bin``. Every record in
``samples.bin`` is, in little-endian byte order and without padding::

    sensor        float32[H, W]   row-major, rows along V_P2
    gradient      float32[H, W]   dS/dV_P1
    state_label   float32[5]      fractions of ND, LD, CD, RD, DD
    quality       uint8           0 high, 1 moderate, 2 low, 255 absent
    noise_scale   float32

The manifest lists each record's byte offset and CRC32 together with its
provenance (device id, voltage window, noise parameters).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from . import __version__
from .noise import (
    COMBINED_TYPES,
    NOISE_TYPES,
    NoiseParams,
    NoiseSampleMode,
    SweepRange,
    apply_noise,
    load_noise_config,
    sample_noise_params,
)
from .simcore import (
    DEFAULT_RANGES,
    STATES,
    DeviceParams,
    OccupancyBoundError,
    VoltageWindow,
    compute_charge_config,
    label_scan,
    sample_device,
    simulate_scan,
)

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SAMPLES = "samples.bin"
FORMAT = "qdtune-dataset/1"
QUALITY_CLASSES = ("high", "moderate", "low")
NO_QUALITY = 255
KINDS = ("noiseless", "combined", "threshold-sweep", "dqc-labeled") + tuple(f"per-noise:{t}" for t in NOISE_TYPES)

FULL_COUNTS = {"noiseless": 16_000, "per-noise": 16_000, "combined": 16_000, "threshold-sweep": 115_000,
                "dqc-labeled": 115_000}
DESK_COUNTS = {"noiseless": 2_000, "per-noise": 2_000, "combined": 2_000, "threshold-sweep": 8_000,
               "dqc-labeled": 8_000}


class DatasetError(Exception):
    pass


class CorruptManifestError(DatasetError):
    pass


class TruncatedRecordError(DatasetError):
    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"record {index} is truncated")


class ChecksumMismatchError(DatasetError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"record {index} fails its CRC32 check")


def record_dtype(shape) -> np.dtype:
    h, w = shape
    return np.dtype([
        ("sensor", "<f4", (h, w)),
        ("gradient", "<f4", (h, w)),
        ("state_label", "<f4", (len(STATES),)),
        ("quality", "u1"),
        ("noise_scale", "<f4"),
    ])


def gradient_image(sensor: np.ndarray, pitch: float) -> np.ndarray:
    """Numerical dS/dV_P1: central differences along columns, one-sided at the edges."""
    sensor = np.asarray(sensor, dtype=float)
    if sensor.shape[-1] < 2:
        raise ValueError("gradient needs at least two columns")
    return np.gradient(sensor, pitch, axis=-1)


@dataclass
class GenerationConfig:
    """Everything besides ``kind``, ``count`` and the seed that shapes a dataset."""

    pixels: int = 30
    pitch: float = 2.0
    center_range: tuple = (-25.0, 80.0)
    device_ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    device_pool_size: int = 64
    device_pool_seed: int = 2022
    base_noise: dict = field(default_factory=lambda: load_noise_config().to_dict())
    sweep: tuple = (0.0, 7.0)
    split_fractions: tuple = (0.8, 0.1, 0.1)
    split_seed: int = 0
    thresholds: dict | None = None

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d: Mapping) -> "GenerationConfig":
        return cls(**dict(d))

    def validate(self):
        if self.pixels < 2 or self.pitch <= 0:
            raise ValueError("need pixels >= 2 and a positive pitch")
        if self.center_range[0] > self.center_range[1]:
            raise ValueError("center_range must be ordered")
        if self.device_pool_size < 1:
            raise ValueError("device_pool_size must be >= 1")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1) > 1e-9 or min(self.split_fractions) < 0:
            raise ValueError("split_fractions must be three non-negative numbers summing to 1")
        SweepRange(*self.sweep)
        NoiseParams.from_dict(self.base_noise)
        # occupancy grows monotonically with both plungers, so the top corner is the worst case
        corner = self.center_range[1] + 0.5 * (self.pixels - 1) * self.pitch
        for i, device in enumerate(device_pool(self)):
            try:
                compute_charge_config(device, corner + self.pitch, corner + self.pitch)
            except OccupancyBoundError:
                raise ValueError(f"device {i} of the pool exceeds the occupancy bound inside the window range") from None


def config_hash(payload: Mapping) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def sample_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Per-sample seed: ``SeedSequence([master_seed, index])``."""
    return np.random.SeedSequence([int(master_seed), int(index)])


def device_pool(config: GenerationConfig) -> list[DeviceParams]:
    return [
        sample_device(np.random.SeedSequence([config.device_pool_seed, i]), config.device_ranges)
        for i in range(config.device_pool_size)
    ]


def _noise_for_kind(kind: str, base: NoiseParams, config: GenerationConfig, rng) -> NoiseParams | None:
    if kind == "noiseless":
        return None
    if kind.startswith("per-noise:"):
        return sample_noise_params(base.only(kind.split(":", 1)[1]), NoiseSampleMode.PER_NOISE_ONE_PERCENT, rng)
    if kind == "combined":
        return sample_noise_params(base.only(*COMBINED_TYPES), NoiseSampleMode.JOINT_THIRD, rng)
    return sample_noise_params(base.only(*COMBINED_TYPES), NoiseSampleMode.THRESHOLD_SWEEP, rng,
                               SweepRange(*config.sweep))


def make_sample(kind: str, master_seed: int, index: int, config: GenerationConfig, devices=None) -> dict:
    """Build one sample deterministically from ``(master_seed, index)``."""
    devices = devices if devices is not None else device_pool(config)
    rng = np.random.default_rng(sample_seed(master_seed, index))
    device_id = int(rng.integers(len(devices)))
    device = devices[device_id]
    lo, hi = config.center_range
    c1, c2 = rng.uniform(lo, hi, size=2)
    window = VoltageWindow.centered(float(c1), float(c2), config.pixels, config.pitch)
    scan = simulate_scan(device, window)
    params = _noise_for_kind(kind, NoiseParams.from_dict(config.base_noise), config, rng)
    if params is None:
        sensor, scale = scan.sensor, 0.0
    else:
        sensor, scale = apply_noise(scan, params, rng), params.noise_scale
    label = label_scan(scan)
    quality = NO_QUALITY
    if kind == "dqc-labeled":
        from .dqc import QualityThresholds, assign_quality

        thresholds = QualityThresholds.from_dict(config.thresholds)
        quality = QUALITY_CLASSES.index(assign_quality(scale, int(np.argmax(label)), thresholds))
    return {
        "sensor": sensor.astype(np.float32),
        "gradient": gradient_image(sensor, window.pitch_v1).astype(np.float32),
        "state_label": label.astype(np.float32),
        "quality": quality,
        "noise_scale": np.float32(scale),
        "device_id": device_id,
        "window": window.to_dict(),
        "noise_params": None if params is None else params.to_dict(),
    }


def _make_chunk(args):
    kind, seed, indices, config_dict = args
    config = GenerationConfig.from_dict(config_dict)
    devices = device_pool(config)
    return [make_sample(kind, seed, i, config, devices) for i in indices]


def _pack(sample: dict, dtype: np.dtype) -> bytes:
    rec = np.zeros((), dtype=dtype)
    for name in dtype.names:
        rec[name] = sample[name]
    return rec.tobytes()


def generate_dataset(kind: str, count: int, seed: int, out_dir, config: GenerationConfig | None = None,
                     workers: int = 1) -> Path:
    """Generate ``count`` samples of ``kind`` into ``out_dir``.

    Records are appended to a temporary file that is renamed, and the manifest is
    written last, so an interrupted run never leaves a loadable dataset.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {', '.join(KINDS)}")
    if count < 1:
        raise ValueError("count must be >= 1")
    config = config or GenerationConfig()
    config.validate()
    if kind == "dqc-labeled" and not config.thresholds:
        raise ValueError("dqc-labeled datasets need quality thresholds in the config")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dtype = record_dtype((config.pixels, config.pixels))
    chunks = [list(range(i, min(i + 256, count))) for i in range(0, count, 256)]
    jobs = [(kind, seed, c, config.to_dict()) for c in chunks]
    records = []
    tmp = out / (SAMPLES + ".partial")
    (out / MANIFEST).unlink(missing_ok=True)
    with open(tmp, "wb") as fh:
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = pool.map(_make_chunk, jobs)
                _write_chunks(fh, results, dtype, records)
        else:
            _write_chunks(fh, map(_make_chunk, jobs), dtype, records)
    os.replace(tmp, out / SAMPLES)

    payload = {"kind": kind, "count": count, "seed": seed, "config": config.to_dict()}
    manifest = {
        "format": FORMAT,
        "generator": f"qdtune {__version__}",
        "kind": kind,
        "seed": seed,
        "sample_count": count,
        "image_shape": [config.pixels, config.pixels],
        "dtype": "float32",
        "byte_order": "little",
        "layout": "row-major",
        "record_size": dtype.itemsize,
        "record_fields": [[name, dtype.fields[name][0].str, list(dtype.fields[name][0].shape)] for name in dtype.names],
        "splits": {"fractions": list(config.split_fractions), "seed": config.split_seed},
        "config": config.to_dict(),
        "config_hash": config_hash(payload),
        "records": records,
    }
    write_json(out / MANIFEST, manifest)
    logger.info("wrote %d %s samples to %s", count, kind, out)
    return out


def _write_chunks(fh, chunk_results, dtype, records):
    offset = 0
    for chunk in chunk_results:
        for s in chunk:
            blob = _pack(s, dtype)
            fh.write(blob)
            records.append({
                "offset": offset,
                "crc32": zlib.crc32(blob),
                "device_id": s["device_id"],
                "window": s["window"],
                "noise_params": s["noise_params"],
            })
            offset += len(blob)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


@dataclass
class Sample:
    sensor: np.ndarray
    gradient: np.ndarray
    state_label: np.ndarray
    quality_label: str | None
    noise_scale: float
    noise_params: NoiseParams | None
    device_id: int
    window: VoltageWindow


class Dataset:
    """Read access to a dataset directory; samples are read from disk on demand."""

    def __init__(self, path, verify: bool = True):
        self.path = Path(path)
        self.manifest = _read_manifest(self.path / MANIFEST)
        self.shape = tuple(self.manifest["image_shape"])
        self.dtype = record_dtype(self.shape)
        m = self.manifest
        if m["record_size"] != self.dtype.itemsize:
            raise CorruptManifestError("record_size does not match the record layout")
        records = m["records"]
        if len(records) != m["sample_count"]:
            raise CorruptManifestError("record table length differs from sample_count")
        offsets = [r["offset"] for r in records]
        if offsets != [i * self.dtype.itemsize for i in range(len(records))]:
            raise CorruptManifestError("record offsets are not contiguous and strictly increasing")
        bin_path = self.path / SAMPLES
        if not bin_path.exists():
            raise TruncatedRecordError(0, "samples.bin is missing")
        size = bin_path.stat().st_size
        expected = len(records) * self.dtype.itemsize
        if size < expected:
            raise TruncatedRecordError(size // self.dtype.itemsize)
        if size > expected:
            raise CorruptManifestError(f"samples.bin has {size - expected} bytes beyond the last record")
        if verify:
            self.verify()

    def __len__(self) -> int:
        return self.manifest["sample_count"]

    @property
    def kind(self) -> str:
        return self.manifest["kind"]

    def _raw(self) -> np.ndarray:
        return np.memmap(self.path / SAMPLES, dtype=self.dtype, mode="r", shape=(len(self),))

    def verify(self):
        raw = self._raw()
        for i, rec in enumerate(self.manifest["records"]):
            if zlib.crc32(raw[i : i + 1].tobytes()) != rec["crc32"]:
                raise ChecksumMismatchError(i)

    def __getitem__(self, index: int) -> Sample:
        if not -len(self) <= index < len(self):
            raise IndexError(index)
        index %= len(self)
        rec = np.array(self._raw()[index])
        meta = self.manifest["records"][index]
        q = int(rec["quality"])
        return Sample(
            sensor=rec["sensor"].copy(),
            gradient=rec["gradient"].copy(),
            state_label=rec["state_label"].copy(),
            quality_label=None if q == NO_QUALITY else QUALITY_CLASSES[q],
            noise_scale=float(rec["noise_scale"]),
            noise_params=None if meta["noise_params"] is None else NoiseParams.from_dict(meta["noise_params"]),
            device_id=meta["device_id"],
            window=VoltageWindow(**meta["window"]),
        )

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def arrays(self, indices=None) -> dict[str, np.ndarray]:
        """Stacked in-memory copies of the record fields, optionally for a subset."""
        raw = self._raw()
        sel = raw if indices is None else raw[np.asarray(indices, dtype=np.int64)]
        return {name: np.array(sel[name]) for name in self.dtype.names}

    def split(self) -> dict[str, np.ndarray]:
        s = self.manifest["splits"]
        return split_indices(len(self), s["fractions"], s["seed"])


def _read_manifest(path: Path) -> dict:
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CorruptManifestError(f"no manifest at {path}") from exc
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptManifestError(f"unreadable manifest {path}: {exc}") from exc
    required = ("format", "sample_count", "image_shape", "record_size", "records", "splits")
    missing = [k for k in required if k not in manifest]
    if missing or manifest.get("format") != FORMAT:
        raise CorruptManifestError(f"manifest {path} is missing {missing or 'a supported format tag'}")
    return manifest


def load_dataset(path, verify: bool = True) -> Dataset:
    return Dataset(path, verify=verify)


def split_indices(n: int, fractions, seed: int) -> dict[str, np.ndarray]:
    """Disjoint, exhaustive train/val/test index sets from a seeded permutation."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train : n_train + n_val]),
        "test": np.sort(perm[n_train + n_val :]),
    }
