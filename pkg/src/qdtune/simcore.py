"""Noiseless charge-stability simulation of a gate-defined double quantum dot.

The device is a constant-interaction capacitance model: two dots with charging
energies, a mutual (inter-dot) charging energy and a lever-arm matrix mapping the
plunger voltages ``(V_P1, V_P2)`` onto the dot chemical potentials. The stable
charge configuration at every pixel is found by exhaustive minimization of the
electrostatic energy over a bounded occupancy grid, and the charge sensor responds
linearly to the dot occupation and to the plungers.

Arrays follow the measurement convention: rows index ``V_P2``, columns index
``V_P1`` (the fast raster axis).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np

STATES = ("ND", "LD", "CD", "RD", "DD")
ND, LD, CD, RD, DD = range(5)
N_MAX = 10


class OccupancyBoundError(RuntimeError):
    """The energy minimizer reached the edge of the occupancy search grid."""


@dataclass(frozen=True)
class DeviceParams:
    """Capacitance-model parameters of a double-dot device.

    Energies are in meV and voltages in mV, so lever arms are in meV/mV.
    ``cross_talk`` is added symmetrically to the off-diagonal lever arms.
    """

    charging_energy_left: float = 2.0
    charging_energy_right: float = 2.2
    mutual_charging_energy: float = 0.4
    lever_arm_matrix: tuple = ((0.10, 0.02), (0.025, 0.09))
    cross_talk: float = 0.0
    sensor_coupling: tuple = (-1.0, -0.8)
    sensor_gate_coupling: tuple = (0.004, 0.003)
    offset_left: float = -2.0
    offset_right: float = -2.0
    merge_ratio_threshold: float = 0.7

    def __post_init__(self):
        object.__setattr__(
            self, "lever_arm_matrix", tuple(tuple(float(v) for v in row) for row in self.lever_arm_matrix)
        )
        object.__setattr__(self, "sensor_coupling", tuple(float(v) for v in self.sensor_coupling))
        object.__setattr__(self, "sensor_gate_coupling", tuple(float(v) for v in self.sensor_gate_coupling))
        problems = self.violations()
        if problems:
            raise ValueError("invalid DeviceParams: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        e1, e2, em = self.charging_energy_left, self.charging_energy_right, self.mutual_charging_energy
        if not (e1 > 0 and e2 > 0):
            out.append("charging energies must be positive")
        if not (0 <= em < min(e1, e2)):
            out.append("mutual charging energy must lie in [0, min(charging energies))")
        lever = np.asarray(self.lever_arm_matrix, dtype=float)
        if lever.shape != (2, 2):
            out.append("lever_arm_matrix must be 2x2")
            return out
        eff = self.effective_lever_arms()
        if np.any(lever < 0) or self.cross_talk < 0:
            out.append("lever arms and cross talk must be non-negative")
        if not (eff[0, 0] > eff[0, 1] and eff[1, 1] > eff[1, 0]):
            out.append("diagonal lever arms must exceed off-diagonal ones")
        if not (0 < self.merge_ratio_threshold < 1):
            out.append("merge_ratio_threshold must lie in (0, 1)")
        if len(self.sensor_coupling) != 2 or len(self.sensor_gate_coupling) != 2:
            out.append("sensor couplings must have length 2")
        return out

    def effective_lever_arms(self) -> np.ndarray:
        lever = np.array(self.lever_arm_matrix, dtype=float)
        lever[0, 1] += self.cross_talk
        lever[1, 0] += self.cross_talk
        return lever

    @property
    def merge_ratio(self) -> float:
        mean_ec = 0.5 * (self.charging_energy_left + self.charging_energy_right)
        return self.mutual_charging_energy / mean_ec

    @property
    def is_merged(self) -> bool:
        return self.merge_ratio > self.merge_ratio_threshold

    def chemical_potentials(self, v1, v2) -> tuple[np.ndarray, np.ndarray]:
        lever = self.effective_lever_arms()
        v1 = np.asarray(v1, dtype=float)
        v2 = np.asarray(v2, dtype=float)
        mu1 = lever[0, 0] * v1 + lever[0, 1] * v2 + self.offset_left
        mu2 = lever[1, 0] * v1 + lever[1, 1] * v2 + self.offset_right
        return mu1, mu2

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeviceParams":
        return cls(**dict(d))


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class VoltageWindow:
    """Rectangular plunger-voltage window sampled on a square pixel grid."""

    v1_start: float
    v1_stop: float
    v2_start: float
    v2_stop: float
    pixels_per_axis: int = 30

    def __post_init__(self):
        if not self.v1_stop > self.v1_start or not self.v2_stop > self.v2_start:
            raise ValueError("window stops must exceed starts")
        if int(self.pixels_per_axis) != self.pixels_per_axis or self.pixels_per_axis < 2:
            raise ValueError("pixels_per_axis must be an integer >= 2")

    @classmethod
    def centered(cls, v1: float, v2: float, pixels: int = 30, pitch: float = 2.0) -> "VoltageWindow":
        """Window of ``pixels`` samples at ``pitch`` mV spacing centred on ``(v1, v2)``.

        A 30-pixel window at 2 mV pitch has a 60 mV footprint; the centre lies
        between the two middle samples for even pixel counts.
        """
        half = 0.5 * (pixels - 1) * pitch
        return cls(v1 - half, v1 + half, v2 - half, v2 + half, pixels)

    @property
    def pitch_v1(self) -> float:
        return (self.v1_stop - self.v1_start) / (self.pixels_per_axis - 1)

    @property
    def pitch_v2(self) -> float:
        return (self.v2_stop - self.v2_start) / (self.pixels_per_axis - 1)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.v1_start + self.v1_stop), 0.5 * (self.v2_start + self.v2_stop)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.pixels_per_axis
        return np.linspace(self.v1_start, self.v1_stop, n), np.linspace(self.v2_start, self.v2_stop, n)

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """``(V1, V2)`` meshes with rows along ``V_P2`` and columns along ``V_P1``."""
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="xy")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class StabilityScan:
    window: VoltageWindow
    sensor: np.ndarray
    state_map: np.ndarray
    occupancy_map: np.ndarray
    device: DeviceParams | None = None
    noise_scale: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.window.pixels_per_axis
        if self.sensor.shape != (n, n) or self.state_map.shape != (n, n):
            raise ValueError("sensor and state_map must be pixels_per_axis x pixels_per_axis")
        if self.occupancy_map.shape != (n, n, 2):
            raise ValueError("occupancy_map must have shape (n, n, 2)")


def _occupancy_grid(n_max: int) -> np.ndarray:
    # ordered by total electron number, then by N_left: argmin picks the tie-break winner
    pairs = [(a, b) for a in range(n_max + 1) for b in range(n_max + 1)]
    pairs.sort(key=lambda p: (p[0] + p[1], p[0]))
    return np.array(pairs, dtype=np.int64)


def configuration_energies(device: DeviceParams, mu1, mu2, occupancies: np.ndarray) -> np.ndarray:
    """Electrostatic energy of every occupancy (last axis) at every potential point."""
    n1 = occupancies[:, 0].astype(float)
    n2 = occupancies[:, 1].astype(float)
    e1, e2, em = device.charging_energy_left, device.charging_energy_right, device.mutual_charging_energy
    const = 0.5 * e1 * n1 * (n1 - 1) + 0.5 * e2 * n2 * (n2 - 1) + em * n1 * n2
    mu1 = np.asarray(mu1, dtype=float)[..., None]
    mu2 = np.asarray(mu2, dtype=float)[..., None]
    return const - n1 * mu1 - n2 * mu2


def occupancy_from_potentials(device: DeviceParams, mu1, mu2, n_max: int = N_MAX) -> np.ndarray:
    """Ground-state occupancy for arrays of dot chemical potentials; shape ``(..., 2)``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    grid = _occupancy_grid(n_max)
    energies = configuration_energies(device, mu1, mu2, grid)
    occ = grid[np.argmin(energies, axis=-1)]
    if np.any(occ == n_max):
        raise OccupancyBoundError(
            f"ground state reaches the occupancy bound N_max={n_max}; shrink the window or adjust the device"
        )
    return occ


def compute_charge_config(device: DeviceParams, v1: float, v2: float, n_max: int = N_MAX) -> tuple[int, int]:
    mu1, mu2 = device.chemical_potentials(v1, v2)
    occ = occupancy_from_potentials(device, mu1, mu2, n_max)
    return int(occ[0]), int(occ[1])


def classify_occupancy(device: DeviceParams, occupancy: np.ndarray) -> np.ndarray:
    """Vectorized state coding of an ``(..., 2)`` occupancy array."""
    occupancy = np.asarray(occupancy)
    n1, n2 = occupancy[..., 0], occupancy[..., 1]
    codes = np.full(n1.shape, DD, dtype=np.int8)
    codes[(n1 > 0) & (n2 == 0)] = LD
    codes[(n1 == 0) & (n2 > 0)] = RD
    if device.is_merged:
        codes[(n1 > 0) | (n2 > 0)] = CD
    codes[(n1 == 0) & (n2 == 0)] = ND
    return codes


def classify_pixel(device: DeviceParams, occupancy) -> int:
    return int(classify_occupancy(device, np.asarray(occupancy)))


def sensor_signal(device: DeviceParams, occupancy: np.ndarray, v1, v2) -> np.ndarray:
    c = device.sensor_coupling
    g = device.sensor_gate_coupling
    return c[0] * occupancy[..., 0] + c[1] * occupancy[..., 1] + g[0] * np.asarray(v1) + g[1] * np.asarray(v2)


def simulate_scan(device: DeviceParams, window: VoltageWindow, n_max: int = N_MAX) -> StabilityScan:
    v1, v2 = window.grid()
    mu1, mu2 = device.chemical_potentials(v1, v2)
    occ = occupancy_from_potentials(device, mu1, mu2, n_max)
    return StabilityScan(
        window=window,
        sensor=sensor_signal(device, occ, v1, v2),
        state_map=classify_occupancy(device, occ),
        occupancy_map=occ,
        device=device,
    )


def label_scan(scan_or_states) -> np.ndarray:
    """Fraction of pixels in each of the five states (ND, LD, CD, RD, DD)."""
    states = scan_or_states.state_map if isinstance(scan_or_states, StabilityScan) else scan_or_states
    counts = np.bincount(np.asarray(states, dtype=np.int64).ravel(), minlength=len(STATES))
    return counts / counts.sum()


# (low, high) for every sampled quantity; lever arms as (diag, off-diag) ranges
DEFAULT_RANGES = {
    "charging_energy_left": (1.8, 2.8),
    "charging_energy_right": (1.8, 2.8),
    "mutual_fraction": (0.05, 0.6),
    "merged_mutual_fraction": (0.9, 0.98),
    "merged_probability": (0.3, 0.3),
    "lever_diag": (0.07, 0.11),
    "lever_offdiag": (0.01, 0.03),
    "sensor_coupling": (-1.2, -0.6),
    "sensor_gate_coupling": (0.0, 0.008),
    "offset": (-3.0, -1.0),
    "merge_ratio_threshold": (0.7, 0.7),
}


class SamplingError(RuntimeError):
    pass


def sample_device(seed, ranges: Mapping | None = None, max_tries: int = 100) -> DeviceParams:
    """Draw a device uniformly within ``ranges``, rejecting invalid draws.

    ``mutual_fraction`` is the mutual charging energy as a fraction of the smaller
    charging energy. With probability ``merged_probability`` it is drawn from
    ``merged_mutual_fraction`` instead, which keeps merged (central-dot) devices
    clear of the ambiguous band around the merge threshold.
    """
    r = dict(DEFAULT_RANGES)
    if ranges:
        r.update(ranges)
    rng = np.random.default_rng(seed)

    def u(key, size=None):
        lo, hi = r[key]
        if lo > hi:
            raise SamplingError(f"range for {key} has low > high")
        return rng.uniform(lo, hi, size)

    last = "no draws"
    for _ in range(max_tries):
        e1, e2 = u("charging_energy_left"), u("charging_energy_right")
        merged = rng.uniform() < u("merged_probability")
        em = u("merged_mutual_fraction" if merged else "mutual_fraction") * min(e1, e2)
        diag, off = u("lever_diag", 2), u("lever_offdiag", 2)
        params = dict(
            charging_energy_left=float(e1),
            charging_energy_right=float(e2),
            mutual_charging_energy=float(em),
            lever_arm_matrix=((float(diag[0]), float(off[0])), (float(off[1]), float(diag[1]))),
            sensor_coupling=tuple(float(x) for x in u("sensor_coupling", 2)),
            sensor_gate_coupling=tuple(float(x) for x in u("sensor_gate_coupling", 2)),
            offset_left=float(u("offset")),
            offset_right=float(u("offset")),
            merge_ratio_threshold=float(u("merge_ratio_threshold")),
        )
        try:
            return DeviceParams(**params)
        except ValueError as exc:
            last = str(exc)
    raise SamplingError(f"no valid device after {max_tries} draws ({last})")
