"""Data quality control: noise thresholds from state-classifier error curves.

A state classifier is evaluated on scans whose joint noise scale sweeps from
clean to featureless. For every dominant state the mean absolute error (MAE) is
binned against the noise scale; the scale at which the binned MAE has risen by
2.5 % of its full range separates high from moderate quality, and 50 % of the
range separates moderate from low. These thresholds label a fresh sweep set on
which the three-class quality network is trained.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import QUALITY_CLASSES, QualityController, ensemble_proba
from .simcore import ND, STATES

logger = logging.getLogger(__name__)

NON_ND = tuple(s for s in STATES if s != "ND")


class CalibrationError(ValueError):
    pass


@dataclass
class QualityThresholds:
    """Per-state ``(lower, upper)`` noise-scale cutoffs."""

    lower: dict
    upper: dict
    source: str = ""

    def __post_init__(self):
        for s in STATES:
            if s not in self.lower or s not in self.upper:
                raise ValueError(f"missing thresholds for state {s}")
            if not 0 <= self.lower[s] < self.upper[s]:
                raise ValueError(f"thresholds for {s} need 0 <= lower < upper")

    def to_dict(self) -> dict:
        return {"lower": dict(self.lower), "upper": dict(self.upper), "source": self.source}

    @classmethod
    def from_dict(cls, d) -> "QualityThresholds":
        return cls(dict(d["lower"]), dict(d["upper"]), d.get("source", ""))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "QualityThresholds":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class MaeCurve:
    state: str
    bin_edges: np.ndarray
    mean_mae: np.ndarray
    counts: np.ndarray
    available: bool = True

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def used(self) -> np.ndarray:
        return self.counts > 0

    @property
    def full_range(self) -> float:
        m = self.mean_mae[self.used]
        return float(m.max() - m.min()) if m.size else 0.0

    def spearman(self) -> float:
        from scipy.stats import spearmanr

        m = self.used
        if m.sum() < 3:
            return float("nan")
        return float(spearmanr(self.centers[m], self.mean_mae[m]).statistic)

    def to_dict(self) -> dict:
        return {"state": self.state, "bin_edges": self.bin_edges.tolist(), "mean_mae": self.mean_mae.tolist(),
                "counts": self.counts.tolist(), "available": self.available}


def sample_mae(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-sample mean absolute error over the label entries."""
    return np.abs(np.asarray(pred) - np.asarray(truth)).mean(axis=-1)


def mae_curves_from_predictions(pred, truth, noise_scale, bins: int = 28, scale_range=(0.0, 7.0)) -> dict:
    """Bin per-sample MAE by noise scale separately for each dominant true state."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    noise_scale = np.asarray(noise_scale, dtype=float)
    errors = sample_mae(pred, truth)
    dominant = np.argmax(truth, axis=1)
    edges = np.linspace(scale_range[0], scale_range[1], bins + 1)
    which = np.clip(np.digitize(noise_scale, edges) - 1, 0, bins - 1)
    curves = {}
    for code, state in enumerate(STATES):
        sel = dominant == code
        counts = np.bincount(which[sel], minlength=bins)
        sums = np.bincount(which[sel], weights=errors[sel], minlength=bins)
        means = np.divide(sums, counts, out=np.full(bins, np.nan), where=counts > 0)
        curves[state] = MaeCurve(state, edges, means, counts, available=bool(sel.any()))
        if not sel.any():
            logger.warning("no samples with dominant state %s; its MAE curve is unavailable", state)
    return curves


def build_mae_curves(model, images, truth, noise_scale, bins: int = 28, scale_range=(0.0, 7.0)) -> dict:
    """MAE-vs-noise curves of a fitted state estimator (or list of them, averaged)."""
    models = model if isinstance(model, (list, tuple)) else [model]
    pred = ensemble_proba(models, images).mean(axis=0)
    return mae_curves_from_predictions(pred, truth, noise_scale, bins, scale_range)


def _crossing(x: np.ndarray, y: np.ndarray, level: float) -> float:
    """First ``x`` at or after the curve minimum where ``y`` reaches ``level``."""
    start = int(np.argmin(y))
    for i in range(start + 1, len(y)):
        if y[i] >= level:
            x0, x1, y0, y1 = x[i - 1], x[i], y[i - 1], y[i]
            return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))
    return float(x[-1])


def calibrate_thresholds(curves: dict, lower_fraction: float = 0.025, upper_fraction: float = 0.5,
                         min_range: float = 1e-6, source: str = "") -> QualityThresholds:
    """Place per-state thresholds where the binned MAE crosses fractions of its range.

    The crossings are searched from the minimum of each curve onwards and
    linearly interpolated between bin centres. ND takes the minimum of the other
    states' thresholds.
    """
    lower, upper = {}, {}
    for state in NON_ND:
        curve = curves.get(state)
        if curve is None or not curve.available:
            raise CalibrationError(f"no MAE curve for state {state}")
        m = curve.used
        x, y = curve.centers[m], curve.mean_mae[m]
        lo, span = float(y.min()), curve.full_range
        if span < min_range:
            raise CalibrationError(f"MAE curve for {state} is flat (range {span:.3g})")
        lower[state] = _crossing(x, y, lo + lower_fraction * span)
        upper[state] = _crossing(x, y, lo + upper_fraction * span)
    lower["ND"] = min(lower[s] for s in NON_ND)
    upper["ND"] = min(upper[s] for s in NON_ND)
    return QualityThresholds(lower, upper, source)


def assign_quality(noise_scale: float, state, thresholds: QualityThresholds) -> str:
    """``high`` below the lower cutoff, ``low`` at or above the upper, else ``moderate``."""
    name = STATES[state] if isinstance(state, (int, np.integer)) else state
    if noise_scale < thresholds.lower[name]:
        return "high"
    if noise_scale < thresholds.upper[name]:
        return "moderate"
    return "low"


def quality_labels(noise_scale, truth, thresholds: QualityThresholds) -> np.ndarray:
    dominant = np.argmax(np.asarray(truth), axis=1)
    return np.array([QUALITY_CLASSES.index(assign_quality(float(s), int(d), thresholds))
                     for s, d in zip(noise_scale, dominant)])


def curves_hash(curves: dict) -> str:
    payload = json.dumps({k: v.to_dict() for k, v in sorted(curves.items())}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def train_dqc(images, quality, seeds=(0,), **estimator_params) -> list[QualityController]:
    """Fit one quality network per seed on gradient images with quality labels."""
    q = np.asarray(quality)
    if q.dtype.kind in "UO":
        q = np.array([QUALITY_CLASSES.index(v) for v in q])
    fractions = np.bincount(q, minlength=3) / max(len(q), 1)
    for name, frac in zip(QUALITY_CLASSES, fractions):
        if frac < 0.05:
            warnings.warn(f"quality class {name!r} makes up only {frac:.1%} of the training set", stacklevel=2)
    return [QualityController(random_state=int(s), **estimator_params).fit(images, q) for s in seeds]


def predict_quality(models, images) -> np.ndarray:
    """Ensemble quality call: argmax of the mean class probabilities."""
    models = models if isinstance(models, (list, tuple)) else [models]
    return np.argmax(ensemble_proba(models, images).mean(axis=0), axis=1)


@dataclass
class QualityCorrelationReport:
    counts: dict
    accuracy: dict = field(default_factory=dict)
    mae: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)
    accuracy_decreasing: bool | None = None
    mae_increasing: bool | None = None
    variance_increasing: bool | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def validate_quality_correlation(dqc_models, dse_models, images, truth, min_count: int = 10,
                                 quality=None) -> QualityCorrelationReport:
    """State-classifier accuracy and MAE per DQC-predicted quality class.

    Accuracy and MAE are computed per state model and summarized as mean and
    standard deviation over the ensemble. Classes with fewer than ``min_count``
    samples are reported but left out of the ordering checks.
    """
    truth = np.asarray(truth)
    if quality is None:
        quality = predict_quality(dqc_models, images)
    probs = ensemble_proba(dse_models, images)
    correct = np.argmax(probs, axis=2) == np.argmax(truth, axis=1)[None]
    errors = sample_mae(probs, truth[None])
    report = QualityCorrelationReport(counts={c: int(np.sum(quality == i)) for i, c in enumerate(QUALITY_CLASSES)})
    for i, c in enumerate(QUALITY_CLASSES):
        sel = quality == i
        if sel.sum() == 0:
            report.excluded.append(c)
            continue
        acc = correct[:, sel].mean(axis=1)
        err = errors[:, sel].mean(axis=1)
        report.accuracy[c] = {"mean": float(acc.mean()), "std": float(acc.std()), "per_model": acc.tolist()}
        report.mae[c] = {"mean": float(err.mean()), "std": float(err.std()), "per_model": err.tolist()}
        if sel.sum() < min_count:
            report.excluded.append(c)
    kept = [c for c in QUALITY_CLASSES if c not in report.excluded]
    if len(kept) >= 2:
        accs = [report.accuracy[c]["mean"] for c in kept]
        maes = [report.mae[c]["mean"] for c in kept]
        stds = [report.accuracy[c]["std"] for c in kept]
        report.accuracy_decreasing = all(a > b for a, b in zip(accs, accs[1:]))
        report.mae_increasing = all(a < b for a, b in zip(maes, maes[1:]))
        report.variance_increasing = all(a <= b for a, b in zip(stds, stds[1:]))
    return report
