"""Quality-gated autotuning loop and sliding-window map evaluation.

Every loop iteration measures a window around the current plunger voltages and
asks the quality classifier for a verdict. High quality scans go to the state
estimator and one optimizer iteration, moderate quality scans trigger a
recalibration of the (simulated) setup, and low quality ends the run.

Estimators may be fitted ``StateEstimator`` / ``QualityController`` objects,
lists of them (averaged), or plain callables taking a ``StabilityScan``. The
callable form lets tests drive the loop with ground-truth oracles.
"""

from __future__ import annotations

import colorsys
import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import gradient_image
from .estimators import QUALITY_CLASSES
from .noise import NoiseParams, apply_noise, load_noise_config
from .simcore import STATES, DeviceParams, StabilityScan, VoltageWindow, simulate_scan

logger = logging.getLogger(__name__)

EXHAUSTED = "recalibration budget exhausted"


class Action(enum.Enum):
    CLASSIFY_AND_OPTIMIZE = "ClassifyAndOptimize"
    RECALIBRATE = "Recalibrate"
    TERMINATE = "Terminate"


ROUTING = {"high": Action.CLASSIFY_AND_OPTIMIZE, "moderate": Action.RECALIBRATE, "low": Action.TERMINATE}


def route(quality: str, budget: int) -> tuple[Action, str]:
    """Action for a quality verdict; a moderate verdict with no budget left terminates."""
    action = ROUTING[quality]
    if action is Action.RECALIBRATE and budget <= 0:
        return Action.TERMINATE, EXHAUSTED
    return action, {"high": "", "moderate": "", "low": "low quality data"}[quality]


class SimulatedDevice:
    """Measurement environment: noisy scans of one simulated device.

    Measurement ``k`` draws its noise from ``SeedSequence([seed, k])``, so a run
    is reproducible for a given seed and call sequence.
    """

    def __init__(self, device: DeviceParams, noise: NoiseParams | None = None, noise_scale: float = 1.0,
                 seed: int = 0, pixels: int = 30, pitch: float = 2.0):
        if noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        self.device = device
        self.noise = noise if noise is not None else load_noise_config()
        self.noise_scale = float(noise_scale)
        self.seed = int(seed)
        self.pixels = pixels
        self.pitch = pitch
        self.measurements = 0

    def window_at(self, v1: float, v2: float) -> VoltageWindow:
        return VoltageWindow.centered(v1, v2, self.pixels, self.pitch)

    def measure(self, window: VoltageWindow) -> StabilityScan:
        scan = simulate_scan(self.device, window)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.measurements]))
        self.measurements += 1
        if self.noise_scale > 0:
            sensor = apply_noise(scan, replace(self.noise, noise_scale=self.noise_scale), rng)
        else:
            sensor = scan.sensor.copy()
        return replace(scan, sensor=sensor, noise_scale=self.noise_scale)

    def recalibrate(self, factor: float):
        self.noise_scale *= factor


def _scan_gradient(scan: StabilityScan) -> np.ndarray:
    return gradient_image(scan.sensor, scan.window.pitch_v1)[None]


def _mean_proba(models, X) -> np.ndarray:
    models = models if isinstance(models, (list, tuple)) else [models]
    return np.mean([m.predict_proba(X) for m in models], axis=0)


def state_prediction(dse, scan: StabilityScan) -> np.ndarray:
    """Five-state probability vector for one scan."""
    if callable(dse) and not hasattr(dse, "predict_proba"):
        return np.asarray(dse(scan), dtype=float)
    return _mean_proba(dse, _scan_gradient(scan))[0]


def quality_verdict(dqc, scan: StabilityScan) -> str:
    if callable(dqc) and not hasattr(dqc, "predict_proba"):
        q = dqc(scan)
        return QUALITY_CLASSES[q] if isinstance(q, (int, np.integer)) else str(q)
    return QUALITY_CLASSES[int(np.argmax(_mean_proba(dqc, _scan_gradient(scan))[0]))]


def normalize_target(target) -> np.ndarray:
    """A state name, index or non-negative vector, returned as a unit-sum vector."""
    if isinstance(target, str):
        return np.eye(len(STATES))[STATES.index(target)]
    if isinstance(target, (int, np.integer)):
        return np.eye(len(STATES))[int(target)]
    t = np.asarray(target, dtype=float)
    if t.shape != (len(STATES),) or np.any(t < 0) or not np.isfinite(t).all():
        raise ValueError("target must be a non-negative vector over the five states")
    if t.sum() <= 0:
        raise ValueError("target vector is zero and cannot be normalized")
    if abs(t.sum() - 1.0) > 1e-6:
        raise ValueError("target vector must sum to 1")
    return t


class NelderMead:
    """Ask/tell Nelder–Mead minimizer in two dimensions with box bounds.

    ``ask`` returns the next point to evaluate and ``tell`` takes its value.
    Points outside ``bounds`` are clamped; the number of clamps is counted.
    """

    def __init__(self, x0, step, bounds, alpha=1.0, gamma=2.0, rho=0.5, sigma=0.5):
        self.bounds = np.asarray(bounds, dtype=float)
        self.clamped = 0
        self.iterations = 0
        x0 = self._clamp(np.asarray(x0, dtype=float))
        self.alpha, self.gamma, self.rho, self.sigma = alpha, gamma, rho, sigma
        pending = [x0]
        for i in range(len(x0)):
            e = np.zeros_like(x0)
            e[i] = step
            p = x0 + e
            if p[i] > self.bounds[i, 1]:
                p = x0 - e
            pending.append(self._clamp(p))
        self.simplex = []
        self.values = []
        self._queue = pending
        self._phase = "init"
        self._trial = None

    def _clamp(self, x):
        y = np.clip(x, self.bounds[:, 0], self.bounds[:, 1])
        if not np.array_equal(x, y):
            self.clamped += 1
            logger.info("optimizer point %s clamped to %s", x.tolist(), y.tolist())
        return y

    def ask(self) -> np.ndarray:
        if self._queue:
            return self._queue[0]
        raise RuntimeError("no pending point")

    def _order(self):
        order = np.argsort(self.values, kind="stable")
        self.simplex = [self.simplex[i] for i in order]
        self.values = [self.values[i] for i in order]

    def _centroid(self):
        return np.mean(self.simplex[:-1], axis=0)

    def _propose(self, phase, x):
        self._phase = phase
        self._queue = [self._clamp(x)]

    def tell(self, value: float):
        x = self._queue.pop(0)
        value = float(value)
        if self._phase == "init":
            self.simplex.append(x)
            self.values.append(value)
            if not self._queue:
                self._order()
                self._start_iteration()
            return
        if self._phase == "shrink":
            self._shrunk.append((x, value))
            if not self._queue:
                self.simplex = [self.simplex[0]] + [p for p, _ in self._shrunk]
                self.values = [self.values[0]] + [v for _, v in self._shrunk]
                self._finish()
            return
        c = self._centroid()
        best, second, worst = self.values[0], self.values[-2], self.values[-1]
        if self._phase == "reflect":
            if best <= value < second:
                self._replace_worst(x, value)
            elif value < best:
                self._trial = (x, value)
                self._propose("expand", c + self.gamma * (x - c))
            elif value < worst:
                self._trial = (x, value)
                self._propose("contract_out", c + self.rho * (x - c))
            else:
                self._propose("contract_in", c + self.rho * (self.simplex[-1] - c))
        elif self._phase == "expand":
            rx, rv = self._trial
            self._replace_worst(x, value) if value < rv else self._replace_worst(rx, rv)
        elif self._phase == "contract_out":
            rx, rv = self._trial
            if value <= rv:
                self._replace_worst(x, value)
            else:
                self._shrink()
        elif self._phase == "contract_in":
            if value < worst:
                self._replace_worst(x, value)
            else:
                self._shrink()

    def _replace_worst(self, x, value):
        self.simplex[-1] = x
        self.values[-1] = value
        self._finish()

    def _shrink(self):
        b = self.simplex[0]
        self._phase = "shrink"
        self._shrunk = []
        self._queue = [self._clamp(b + self.sigma * (p - b)) for p in self.simplex[1:]]

    def _finish(self):
        self._order()
        self._start_iteration()
        self.iterations += 1

    def _start_iteration(self):
        c = self._centroid()
        self._propose("reflect", c + self.alpha * (c - self.simplex[-1]))

    @property
    def best(self) -> tuple[np.ndarray, float]:
        return self.simplex[0], self.values[0]

    @property
    def diameter(self) -> float:
        pts = np.asarray(self.simplex)
        if len(pts) < 2:
            return float("inf")
        return float(max(np.linalg.norm(a - b) for a in pts for b in pts))


@dataclass
class TunerState:
    """Mutable loop state. ``log`` only ever grows."""

    voltages: tuple
    budget: int = 3
    noise_scale: float = 1.0
    target: np.ndarray = field(default_factory=lambda: normalize_target("DD"))
    bounds: tuple = ((-25.0, 80.0), (-25.0, 80.0))
    log: list = field(default_factory=list)
    done: bool = False
    converged: bool = False
    success: bool | None = None
    reason: str = ""
    optimizer: NelderMead | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("recalibration budget must be >= 0")
        self.target = normalize_target(self.target)
        self.voltages = tuple(float(v) for v in self.voltages)


def fitness(prediction, target) -> float:
    return float(np.linalg.norm(np.asarray(prediction) - np.asarray(target)))


def optimize_voltages(state: TunerState, dse, env, step: float = 15.0, tol_fitness: float = 0.2,
                      tol_diameter: float = 1.0, first=None) -> tuple:
    """Run one Nelder–Mead iteration on ``fitness(V) = ||P(scan(V)) - target||``.

    Sets ``state.converged`` when the best fitness drops below ``tol_fitness``
    or the simplex diameter below ``tol_diameter`` mV, and records whether the
    best point's predicted state matches the target. ``first`` may carry the
    prediction already measured at the current voltages.
    """

    def evaluate(x, pred=None):
        if pred is None:
            pred = state_prediction(dse, env.measure(env.window_at(*x)))
        return fitness(pred, state.target), pred

    preds = {}
    if state.optimizer is None:
        value, pred = evaluate(state.voltages, first)
        if value < tol_fitness:
            state.converged, state.success = True, bool(np.argmax(pred) == np.argmax(state.target))
            return state.voltages
        state.optimizer = NelderMead(state.voltages, step, state.bounds)
        x = state.optimizer.ask()
        preds[tuple(x)] = pred
        state.optimizer.tell(value)
    opt = state.optimizer
    start = opt.iterations
    while opt.iterations == start:
        x = opt.ask()
        value, pred = evaluate(x)
        preds[tuple(x)] = pred
        opt.tell(value)
    best_x, best_value = opt.best
    state.voltages = tuple(float(v) for v in best_x)
    if best_value < tol_fitness or opt.diameter < tol_diameter:
        state.converged = True
        best_pred = preds.get(tuple(best_x))
        if best_pred is None:
            best_pred = state_prediction(dse, env.measure(env.window_at(*best_x)))
        state.success = bool(np.argmax(best_pred) == np.argmax(state.target))
    return state.voltages


def tune_step(state: TunerState, dqc, dse, env, recalibration_factor: float = 0.5,
              **optimizer_options) -> tuple[Action, TunerState]:
    """One loop iteration: measure, gate on quality, then optimize, recalibrate or stop."""
    if state.done:
        return Action.TERMINATE, state
    scan = env.measure(env.window_at(*state.voltages))
    quality = quality_verdict(dqc, scan)
    action, reason = route(quality, state.budget)
    entry = {"step": len(state.log), "voltages": list(state.voltages), "noise_scale": env.noise_scale,
             "quality": quality, "action": action.value, "state_prediction": None}
    if action is Action.CLASSIFY_AND_OPTIMIZE:
        pred = state_prediction(dse, scan)
        entry["state_prediction"] = pred.tolist()
        entry["fitness"] = fitness(pred, state.target)
        optimize_voltages(state, dse, env, first=pred, **optimizer_options)
        entry["next_voltages"] = list(state.voltages)
        if state.converged:
            state.done = True
            state.reason = "converged"
            entry["converged"] = True
            entry["success"] = state.success
    elif action is Action.RECALIBRATE:
        env.recalibrate(recalibration_factor)
        state.budget -= 1
    else:
        state.done = True
        state.reason = reason
        entry["reason"] = reason
    state.noise_scale = env.noise_scale
    state.log.append(entry)
    return action, state


def run_tuning(state: TunerState, dqc, dse, env, max_steps: int = 50, **options) -> TunerState:
    """Iterate ``tune_step`` until termination, convergence or ``max_steps``."""
    for _ in range(max_steps):
        tune_step(state, dqc, dse, env, **options)
        if state.done:
            return state
    state.done = True
    state.reason = "iteration cap reached"
    return state


# ---------------------------------------------------------------- large maps

class ScanTooSmallError(ValueError):
    pass


STATE_HUES = {"ND": 0.0, "LD": 0.2, "CD": 0.4, "RD": 0.6, "DD": 0.8}


@dataclass
class MapResult:
    state_probs: np.ndarray
    quality: np.ndarray
    quality_probs: np.ndarray
    margin: int

    def rendered_states(self) -> np.ndarray:
        return render_state_map(self.state_probs)

    def mixed_mask(self, threshold: float = 0.7) -> np.ndarray:
        """Pixels whose dominant state probability stays below ``threshold``."""
        return self.state_probs.max(axis=-1) < threshold


def render_state_map(probs) -> np.ndarray:
    """RGB image (uint8) from per-pixel state probabilities.

    Each state has a hue; a pixel's hue is the probability-weighted circular
    mean of the state hues and its saturation the length of that mean vector,
    so mixed predictions render paler.
    """
    probs = np.asarray(probs, dtype=float)
    angles = 2 * np.pi * np.array([STATE_HUES[s] for s in STATES])
    z = probs @ np.exp(1j * angles)
    hue = (np.angle(z) / (2 * np.pi)) % 1.0
    sat = np.clip(np.abs(z), 0.0, 1.0)
    rgb = np.array([colorsys.hsv_to_rgb(h, s, 1.0) for h, s in zip(hue.ravel(), sat.ravel())])
    return np.round(255 * rgb).astype(np.uint8).reshape(probs.shape[:-1] + (3,))


def _windows(sensor: np.ndarray, window: int, margin: int) -> np.ndarray:
    n_rows, n_cols = sensor.shape
    view = np.lib.stride_tricks.sliding_window_view(sensor, (window, window))
    # window centred on pixel i spans i - window//2 .. i + window//2 - 1
    lo = margin - window // 2
    return view[lo : lo + n_rows - 2 * margin, lo : lo + n_cols - 2 * margin]


def evaluate_map(scan: StabilityScan, dse, dqc, window: int = 30, margin_mv: float = 30.0,
                 batch_size: int = 512) -> MapResult:
    """Slide a ``window``-pixel scan over every interior pixel of a large scan.

    The margin is ``margin_mv`` converted to pixels, and the outputs are the
    full DSE probability vectors and DQC classes on the cropped interior.
    """
    sensor = np.asarray(scan.sensor, dtype=float)
    pitch = scan.window.pitch_v1
    margin = int(round(margin_mv / pitch))
    if margin < window // 2:
        raise ValueError("margin must cover half a window")
    if min(sensor.shape) <= window + 2 * margin:
        raise ScanTooSmallError(
            f"scan of {sensor.shape} pixels must exceed window + 2 x margin = {window + 2 * margin} per axis"
        )
    views = _windows(sensor, window, margin)
    h, w = views.shape[:2]
    flat = views.reshape(h * w, window, window)
    dse_models = dse if isinstance(dse, (list, tuple)) else [dse]
    dqc_models = dqc if isinstance(dqc, (list, tuple)) else [dqc]
    state_probs = np.empty((h * w, len(STATES)))
    quality_probs = np.empty((h * w, len(QUALITY_CLASSES)))
    for start in range(0, h * w, batch_size):
        grads = gradient_image(flat[start : start + batch_size], pitch)
        state_probs[start : start + batch_size] = _mean_proba(dse_models, grads)
        quality_probs[start : start + batch_size] = _mean_proba(dqc_models, grads)
    return MapResult(
        state_probs=state_probs.reshape(h, w, -1),
        quality=np.argmax(quality_probs, axis=1).reshape(h, w),
        quality_probs=quality_probs.reshape(h, w, -1),
        margin=margin,
    )


def iou(a, b) -> float:
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 1.0


@dataclass
class LargeScanSpec:
    """Recipe for a large simulated scan with an optional left-to-right noise ramp."""

    device: dict = field(default_factory=lambda: DeviceParams().to_dict())
    v1_range: tuple = (-30.0, 100.0)
    v2_range: tuple = (-30.0, 100.0)
    pixels: int = 66
    noise: dict | None = None
    scale_ramp: tuple | None = (0.0, 4.5)
    seed: int = 0

    def to_dict(self) -> dict:
        return {"device": self.device, "v1_range": list(self.v1_range), "v2_range": list(self.v2_range),
                "pixels": self.pixels, "noise": self.noise,
                "scale_ramp": None if self.scale_ramp is None else list(self.scale_ramp), "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "LargeScanSpec":
        d = dict(d)
        for key in ("v1_range", "v2_range", "scale_ramp"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def simulate(self) -> StabilityScan:
        device = DeviceParams.from_dict(self.device)
        window = VoltageWindow(*self.v1_range, *self.v2_range, self.pixels)
        scan = simulate_scan(device, window)
        if self.scale_ramp is None:
            return scan
        noise = NoiseParams.from_dict(self.noise) if self.noise else load_noise_config()
        noise = replace(noise.only("dot_jumps", "white", "pink", "sensor_jumps"), noise_scale=1.0)
        profile = np.broadcast_to(np.linspace(*self.scale_ramp, self.pixels)[None, :], scan.sensor.shape)
        sensor = apply_noise(scan, noise, np.random.default_rng(self.seed), scale_profile=profile)
        return replace(scan, sensor=sensor, meta={"scale_profile": profile})
