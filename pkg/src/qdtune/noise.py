"""Synthetic experimental noise for simulated charge-stability scans.

Five processes are modelled: dot jumps (charge traps shifting the dot
potentials), the Coulomb-peak lineshape of the sensing dot, white noise, 1/f
(pink) noise and sensor jumps. They are composed along the physical signal
path: dot jumps -> sensor transfer function -> additive readout noise -> sensor
jumps.
"""

from __future__ import annotations

import configparser
import enum
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .simcore import StabilityScan, occupancy_from_potentials, sensor_signal

NOISE_TYPES = ("dot_jumps", "coulomb_peak", "white", "pink", "sensor_jumps")
# the best-performing combination omits the Coulomb peak
COMBINED_TYPES = ("dot_jumps", "white", "pink", "sensor_jumps")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NoiseParams:
    white_sigma: float = 0.0
    pink_magnitude: float = 0.0
    coulomb_A: float = 0.0
    coulomb_gmax: float = 1.0
    coulomb_vmin: float = 0.0
    coulomb_vmin_slope: float = 0.0
    sensor_jump_prob: float = 0.0
    sensor_jump_sigma: float = 0.0
    dot_jump_prob: float = 0.0
    dot_jump_rate: float = 0.0
    dot_jump_unit: float = 0.1
    enabled: dict = field(default_factory=lambda: {k: False for k in NOISE_TYPES})
    noise_scale: float = 1.0

    def __post_init__(self):
        enabled = {k: False for k in NOISE_TYPES}
        enabled.update(self.enabled)
        unknown = set(enabled) - set(NOISE_TYPES)
        if unknown:
            raise ValueError(f"unknown noise types: {sorted(unknown)}")
        object.__setattr__(self, "enabled", {k: bool(enabled[k]) for k in NOISE_TYPES})
        for name in ("sensor_jump_prob", "dot_jump_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("white_sigma", "pink_magnitude", "coulomb_A", "coulomb_gmax", "sensor_jump_sigma",
                     "dot_jump_rate", "dot_jump_unit", "noise_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def only(self, *types: str) -> "NoiseParams":
        """Copy with exactly ``types`` enabled."""
        return replace(self, enabled={k: k in types for k in NOISE_TYPES})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "NoiseParams":
        return cls(**dict(d))


def load_noise_config(path=None) -> NoiseParams:
    """Read base noise magnitudes from a flat ``key = value`` file.

    Without ``path`` the packaged defaults are used. Keys named ``enable_<type>``
    switch individual noise processes.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    if path is None:
        text = resources.files("qdtune").joinpath("data/default_noise.cfg").read_text()
    else:
        text = Path(path).read_text()
    parser.read_string(text)
    section = parser["noise"]
    kwargs, enabled = {}, {}
    for key, raw in section.items():
        if key.startswith("enable_"):
            enabled[key[len("enable_"):]] = section.getboolean(key)
        else:
            kwargs[key] = float(raw)
    return NoiseParams(enabled=enabled, **kwargs)


def white_noise(values: np.ndarray, sigma: float, seed) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if sigma == 0:
        return values.copy()
    return values + _rng(seed).normal(0.0, sigma, size=values.shape)


def _pink_unit_field(shape, rng) -> np.ndarray:
    ny, nx = shape
    fy = np.fft.fftfreq(ny)[:, None]
    fx = np.fft.fftfreq(nx)[None, :]
    f = np.sqrt(fx**2 + fy**2)
    amp = np.zeros(shape)
    amp[f > 0] = 1.0 / f[f > 0]
    phase = rng.uniform(0.0, 2 * np.pi, size=shape)
    # taking the real part equals inverting the Hermitian-symmetrized spectrum
    field_ = np.fft.ifft2(amp * np.exp(1j * phase)).real
    # expected pixel std of the real part under uniform random phases
    norm = np.sqrt(np.sum(amp**2) / 2.0) / (ny * nx)
    return field_ / norm


def pink_noise(shape, magnitude: float, seed) -> np.ndarray:
    """Random-phase field with spectral amplitude proportional to ``1/|f|``.

    The DC bin is zero. ``magnitude`` is the expected pixel standard deviation,
    and the output is exactly linear in it for a fixed seed.
    """
    shape = tuple(int(s) for s in shape)
    if magnitude == 0:
        return np.zeros(shape)
    return magnitude * _pink_unit_field(shape, _rng(seed))


def coulomb_peak(values: np.ndarray, A: float, gmax: float, vmin) -> np.ndarray:
    """Weak-coupling Coulomb-blockade lineshape ``gmax / cosh^2(A (V - vmin))``."""
    x = A * (np.asarray(values, dtype=float) - vmin)
    return gmax / np.cosh(x) ** 2


def jump_mask(shape, prob: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Bernoulli jump events in raster (row-major) order.

    Returns the boolean event map and a segment-id map; the segment id counts the
    jumps at or before each pixel, so pixel 0 starts segment 0 unless it jumps.
    """
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must lie in [0, 1]")
    shape = tuple(int(s) for s in shape)
    jumps = _rng(seed).random(shape) < prob
    segments = np.cumsum(jumps.ravel()).reshape(shape)
    return jumps, segments


def run_lengths(jumps: np.ndarray) -> np.ndarray:
    """Pixel gaps between successive jumps along the raster."""
    idx = np.flatnonzero(np.asarray(jumps).ravel())
    return np.diff(idx)


def add_jump_offsets(values: np.ndarray, jumps: np.ndarray, increments) -> np.ndarray:
    """Add the running sum of ``increments`` (one per jump, raster order) to ``values``."""
    values = np.asarray(values, dtype=float)
    segments = np.cumsum(np.asarray(jumps).ravel()).reshape(values.shape)
    offsets = np.concatenate([[0.0], np.cumsum(increments, dtype=float)])
    return values + offsets[segments]


def sensor_jumps(values: np.ndarray, prob: float, sigma: float, seed) -> np.ndarray:
    """Add a random-walk offset that steps by ``N(0, sigma^2)`` at every jump."""
    values = np.asarray(values, dtype=float)
    rng = _rng(seed)
    jumps, _ = jump_mask(values.shape, prob, rng)
    n_jumps = int(jumps.sum())
    if n_jumps == 0:
        return values.copy()
    return add_jump_offsets(values, jumps, rng.normal(0.0, sigma, size=n_jumps))


def dot_jump_shifts(shape, prob: float, rate: float, seed) -> np.ndarray:
    """Per-pixel integer potential shifts from Poisson-magnitude dot jumps.

    Each segment between jumps carries the signed Poisson draw made at its
    starting jump; the first segment is unshifted.
    """
    rng = _rng(seed)
    jumps, segments = jump_mask(shape, prob, rng)
    n_jumps = int(jumps.sum())
    magnitudes = rng.poisson(rate, size=n_jumps)
    signs = rng.choice(np.array([-1, 1]), size=n_jumps)
    shifts = np.concatenate([[0], magnitudes * signs])
    return shifts[segments]


def dot_jumps(scan: StabilityScan, prob: float, rate: float, seed, unit: float = 0.1) -> StabilityScan:
    """Recompute the occupancy of ``scan`` with jump-shifted dot potentials.

    The shift in meV is ``unit`` times the signed Poisson count and is applied to
    both dot potentials. The returned scan keeps the original ground-truth
    ``state_map``; only ``occupancy_map`` and ``sensor`` reflect the jumps.
    """
    if scan.device is None:
        raise ValueError("dot jumps need the scan's device parameters")
    shifts = dot_jump_shifts(scan.sensor.shape, prob, rate, seed) * unit
    if not np.any(shifts):
        return replace(scan, sensor=scan.sensor.copy(), occupancy_map=scan.occupancy_map.copy())
    v1, v2 = scan.window.grid()
    mu1, mu2 = scan.device.chemical_potentials(v1, v2)
    occ = occupancy_from_potentials(scan.device, mu1 + shifts, mu2 + shifts)
    return replace(scan, sensor=sensor_signal(scan.device, occ, v1, v2), occupancy_map=occ)


def apply_noise(scan: StabilityScan, params: NoiseParams, seed, scale_profile=None) -> np.ndarray:
    """Noisy sensor map of ``scan``; ground truth is left untouched.

    ``scale_profile`` optionally multiplies ``params.noise_scale`` per pixel
    (broadcast against the map), for scans whose signal-to-noise ratio drifts.
    """
    rng = _rng(seed)
    # independent child streams keep each process stable when others are toggled
    s_dot, s_pink, s_white, s_jump = rng.spawn(4)
    on = params.enabled
    scale = params.noise_scale
    if scale_profile is not None:
        scale = scale * np.broadcast_to(np.asarray(scale_profile, dtype=float), scan.sensor.shape)

    signal = scan.sensor.astype(float, copy=True)
    if on["dot_jumps"] and params.dot_jump_prob > 0:
        signal = dot_jumps(scan, params.dot_jump_prob, params.dot_jump_rate, s_dot, params.dot_jump_unit).sensor
    if on["coulomb_peak"]:
        n = signal.size
        vmin = params.coulomb_vmin + params.coulomb_vmin_slope * np.arange(n).reshape(signal.shape) / max(n - 1, 1)
        signal = coulomb_peak(signal, params.coulomb_A, params.coulomb_gmax, vmin)
    if on["pink"]:
        signal = signal + scale * pink_noise(signal.shape, params.pink_magnitude, s_pink)
    if on["white"]:
        signal = signal + scale * white_noise(np.zeros(signal.shape), params.white_sigma, s_white)
    if on["sensor_jumps"]:
        steps = sensor_jumps(np.zeros(signal.shape), params.sensor_jump_prob, params.sensor_jump_sigma, s_jump)
        if np.ndim(scale) == 0:
            signal = signal + scale * steps
        else:
            # a spatially varying scale multiplies each jump's increment where it happens
            flat = np.diff(steps.ravel(), prepend=0.0) * np.ravel(scale)
            signal = signal + np.cumsum(flat).reshape(signal.shape)
    return signal


class NoiseSampleMode(enum.Enum):
    PER_NOISE_ONE_PERCENT = "per-noise"
    JOINT_THIRD = "joint-third"
    THRESHOLD_SWEEP = "threshold-sweep"


@dataclass(frozen=True)
class SweepRange:
    scale_min: float = 0.0
    scale_max: float = 7.0

    def __post_init__(self):
        if not 0 <= self.scale_min < self.scale_max:
            raise ValueError("sweep bounds need 0 <= scale_min < scale_max")


_VARIED = ("white_sigma", "pink_magnitude", "coulomb_A", "coulomb_gmax", "sensor_jump_prob",
           "sensor_jump_sigma", "dot_jump_prob", "dot_jump_rate")
_DOT = ("dot_jump_prob", "dot_jump_rate")


def _one_percent(base: NoiseParams, rng, names) -> dict:
    out = {}
    for name in names:
        value = getattr(base, name)
        draw = rng.normal(value, 0.01 * abs(value))
        if name.endswith("_prob"):
            draw = min(max(draw, 0.0), 1.0)
        out[name] = max(float(draw), 0.0)
    return out


def sample_noise_params(base: NoiseParams, mode: NoiseSampleMode, seed,
                        sweep: SweepRange | None = None) -> NoiseParams:
    """Draw a per-sample noise configuration around ``base``.

    ``PER_NOISE_ONE_PERCENT`` jitters every parameter by 1 % of its value.
    ``JOINT_THIRD`` scales white, pink and sensor-jump noise together by a shared
    ``N(1, 1/9)`` factor truncated at 0, recorded as ``noise_scale``.
    ``THRESHOLD_SWEEP`` draws ``noise_scale`` uniformly over ``sweep``. Both joint
    modes keep the 1 % jitter on the dot jumps.
    """
    rng = _rng(seed)
    mode = NoiseSampleMode(mode)
    if mode is NoiseSampleMode.PER_NOISE_ONE_PERCENT:
        return replace(base, **_one_percent(base, rng, _VARIED))
    if mode is NoiseSampleMode.JOINT_THIRD:
        factor = max(0.0, float(rng.normal(1.0, 1.0 / 3.0)))
        return replace(base, noise_scale=factor, **_one_percent(base, rng, _DOT))
    sweep = sweep or SweepRange()
    scale = float(rng.uniform(sweep.scale_min, sweep.scale_max))
    return replace(base, noise_scale=scale, **_one_percent(base, rng, _DOT))
