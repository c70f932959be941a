"""Device-state estimation: prediction, ensemble evaluation and the training matrix."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import load_dataset
from .estimators import StateEstimator, ensemble_proba, preprocess
from .simcore import STATES
from .validation import check_images, check_targets

logger = logging.getLogger(__name__)

__all__ = ["preprocess", "predict_state", "evaluate", "EvaluationReport", "run_matrix_experiment",
           "format_uncertainty", "MATRIX_CONDITIONS"]


def predict_state(model: StateEstimator, image) -> np.ndarray:
    """Five-state probability vector for a single gradient image."""
    return model.predict_proba(check_images(image))[0]


def format_uncertainty(mean: float, std: float, decimals: int = 1) -> str:
    """``value(uncertainty)`` notation, e.g. 92.5 +- 0.7 -> ``92.5(7)``, 52.3 +- 5.1 -> ``52.3(5.1)``."""
    unit = 10.0 ** -decimals
    if std < 1.0:
        return f"{mean:.{decimals}f}({int(round(std / unit))})"
    return f"{mean:.{decimals}f}({std:.{decimals}f})"


@dataclass
class EvaluationReport:
    accuracy: np.ndarray
    mae: np.ndarray
    per_state_accuracy: dict
    per_state_mae: dict
    predictions: np.ndarray = field(repr=False)

    @property
    def accuracy_mean(self) -> float:
        return float(np.mean(self.accuracy))

    @property
    def accuracy_std(self) -> float:
        return float(np.std(self.accuracy))

    @property
    def mae_mean(self) -> float:
        return float(np.mean(self.mae))

    @property
    def mae_std(self) -> float:
        return float(np.std(self.mae))

    def summary(self) -> dict:
        return {
            "models": int(len(self.accuracy)),
            "accuracy": self.accuracy.tolist(),
            "mae": self.mae.tolist(),
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "mae_mean": self.mae_mean,
            "mae_std": self.mae_std,
            "accuracy_percent": format_uncertainty(100 * self.accuracy_mean, 100 * self.accuracy_std),
            "per_state_accuracy": self.per_state_accuracy,
            "per_state_mae": self.per_state_mae,
        }


def evaluate_predictions(probs, truth) -> EvaluationReport:
    """Score stacked predictions ``(n_models, n, 5)`` against fractional labels.

    Accuracy counts argmax agreement; MAE averages the absolute error over the
    five entries and then over samples.
    """
    probs = np.asarray(probs, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if truth.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    dominant = np.argmax(truth, axis=1)
    correct = np.argmax(probs, axis=2) == dominant[None]
    errors = np.abs(probs - truth[None]).mean(axis=2)
    per_acc, per_mae = {}, {}
    for code, state in enumerate(STATES):
        sel = dominant == code
        if sel.any():
            per_acc[state] = float(correct[:, sel].mean())
            per_mae[state] = float(errors[:, sel].mean())
    return EvaluationReport(correct.mean(axis=1), errors.mean(axis=1), per_acc, per_mae, probs)


def evaluate(models, images, truth) -> EvaluationReport:
    models = list(models)
    if not models:
        raise ValueError("need at least one model")
    truth = check_targets(truth, len(STATES))
    if len(truth) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return evaluate_predictions(ensemble_proba(models, images), truth)


# Training conditions in box-plot order: label -> (dataset kind, architecture, clip)
MATRIX_CONDITIONS = {
    "A": ("noiseless", "noiseless", False),
    "A_proc": ("noiseless", "noiseless", True),
    "B": ("per-noise:dot_jumps", "noiseless", False),
    "C": ("per-noise:coulomb_peak", "noiseless", False),
    "D": ("per-noise:white", "noiseless", False),
    "E": ("per-noise:pink", "noiseless", False),
    "F": ("per-noise:sensor_jumps", "noiseless", False),
    "G": ("combined", "noiseless", False),
    "G_opt": ("combined", "noisy", False),
}


def box_stats(values) -> dict:
    """Median, quartiles and 1.5 IQR whiskers clipped to the data."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "whisker_low": float(lo),
            "whisker_high": float(hi), "mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}


def run_matrix_experiment(datasets: dict, test_dataset, conditions=None, models_per_cell: int = 20, seed: int = 0,
                          out_dir=None, **estimator_params) -> dict:
    """Train ``models_per_cell`` state estimators per training condition and score them.

    ``datasets`` maps dataset kinds (``noiseless``, ``per-noise:white``, ...) to
    dataset directories. Returns a table of box-plot statistics keyed by
    condition, in the canonical order; with ``out_dir`` the table is written to
    ``matrix.json`` and, if matplotlib is installed, drawn to ``matrix.png``.
    """
    conditions = list(conditions or MATRIX_CONDITIONS)
    missing = [c for c in conditions if MATRIX_CONDITIONS[c][0] not in datasets]
    if missing:
        raise KeyError(f"no dataset for conditions {missing}")
    test = load_dataset(test_dataset).arrays()
    table = {}
    for label in [c for c in MATRIX_CONDITIONS if c in conditions]:
        kind, arch, clip = MATRIX_CONDITIONS[label]
        train = load_dataset(datasets[kind]).arrays()
        models = [
            StateEstimator(architecture=arch, clip=clip, random_state=seed + i, **estimator_params)
            .fit(train["gradient"], train["state_label"])
            for i in range(models_per_cell)
        ]
        report = evaluate(models, test["gradient"], test["state_label"])
        table[label] = {"dataset": kind, "architecture": arch, "clip": clip,
                        "accuracy": box_stats(report.accuracy), "mae": box_stats(report.mae)}
        logger.info("condition %s: accuracy %s", label, table[label]["accuracy"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "matrix.json").write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")
        _plot_matrix(table, out / "matrix.png")
    return table


def _plot_matrix(table: dict, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.info("matplotlib not installed; skipping the box plot")
        return
    labels = list(table)
    stats = [{"med": s["accuracy"]["median"], "q1": s["accuracy"]["q1"], "q3": s["accuracy"]["q3"],
              "whislo": s["accuracy"]["whisker_low"], "whishi": s["accuracy"]["whisker_high"], "label": k}
             for k, s in table.items()]
    fig, ax = plt.subplots(figsize=(1 + 0.8 * len(labels), 3))
    ax.bxp(stats, showfliers=False)
    ax.set_ylabel("accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
