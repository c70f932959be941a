import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdtune.dqc import (
    CalibrationError,
    MaeCurve,
    QualityThresholds,
    assign_quality,
    calibrate_thresholds,
    curves_hash,
    mae_curves_from_predictions,
    quality_labels,
    sample_mae,
    train_dqc,
    validate_quality_correlation,
)
from qdtune.simcore import STATES

EDGES = np.linspace(0, 7, 29)
CENTERS = 0.5 * (EDGES[1:] + EDGES[:-1])


def logistic(x, lo=0.05, hi=0.35, mid=3.0, width=0.5):
    return lo + (hi - lo) / (1 + np.exp(-(x - mid) / width))


def curve(state, y):
    return MaeCurve(state, EDGES, np.asarray(y, float), np.full(28, 10))


def logistic_curves(mids=None, **kw):
    mids = mids or {"LD": 3.0, "CD": 2.0, "RD": 3.5, "DD": 2.5}
    out = {s: curve(s, logistic(CENTERS, mid=m, **kw)) for s, m in mids.items()}
    out["ND"] = curve("ND", np.full(28, 0.05))
    return out


def crossing_oracle(y, level):
    """Dense-grid crossing of the piecewise-linear curve through the bin centres."""
    xs = np.linspace(CENTERS[0], CENTERS[-1], 200001)
    ys = np.interp(xs, CENTERS, y)
    return xs[np.argmax(ys >= level)]


def test_logistic_thresholds_match_oracle():
    curves = logistic_curves()
    th = calibrate_thresholds(curves)
    for s in ("LD", "CD", "RD", "DD"):
        y = curves[s].mean_mae
        span = y.max() - y.min()
        assert th.lower[s] == pytest.approx(crossing_oracle(y, y.min() + 0.025 * span), abs=1e-3)
        assert th.upper[s] == pytest.approx(crossing_oracle(y, y.min() + 0.5 * span), abs=1e-3)
    assert th.upper["LD"] == pytest.approx(3.0, abs=0.05)


def test_nd_takes_minimum():
    th = calibrate_thresholds(logistic_curves())
    assert th.lower["ND"] == min(th.lower[s] for s in ("LD", "CD", "RD", "DD"))
    assert th.upper["ND"] == th.upper["CD"]


def test_translation_invariance():
    a = calibrate_thresholds(logistic_curves())
    b = calibrate_thresholds({k: curve(k, v.mean_mae + 0.2) for k, v in logistic_curves().items()})
    for s in STATES:
        assert a.lower[s] == pytest.approx(b.lower[s], abs=1e-9)
        assert a.upper[s] == pytest.approx(b.upper[s], abs=1e-9)


@settings(max_examples=30)
@given(st.floats(0.1, 10.0), st.floats(-0.5, 0.5))
def test_affine_invariance(scale, shift):
    base = logistic_curves()
    a = calibrate_thresholds(base)
    b = calibrate_thresholds({k: curve(k, scale * v.mean_mae + shift) for k, v in base.items()})
    for s in STATES:
        assert a.lower[s] == pytest.approx(b.lower[s], abs=1e-6)


def test_flat_curve_raises():
    curves = logistic_curves()
    curves["RD"] = curve("RD", np.full(28, 0.1))
    with pytest.raises(CalibrationError, match="RD"):
        calibrate_thresholds(curves)


def test_missing_state_raises():
    curves = logistic_curves()
    curves["CD"] = MaeCurve("CD", EDGES, np.full(28, np.nan), np.zeros(28, int), available=False)
    with pytest.raises(CalibrationError):
        calibrate_thresholds(curves)


def test_crossing_searched_after_minimum():
    y = logistic(CENTERS)
    y[0] = 0.3  # noisy first bin above the plateau
    th = calibrate_thresholds({**logistic_curves(), "LD": curve("LD", y)})
    assert th.lower["LD"] > CENTERS[1]


@pytest.mark.parametrize("scale,expected", [(0.99, "high"), (1.0, "moderate"), (2.99, "moderate"), (3.0, "low")])
def test_boundaries_half_open(scale, expected):
    th = QualityThresholds({s: 1.0 for s in STATES}, {s: 3.0 for s in STATES})
    assert assign_quality(scale, "LD", th) == expected
    assert assign_quality(scale, 1, th) == expected


def test_quality_labels_use_dominant_state():
    th = QualityThresholds({**{s: 1.0 for s in STATES}, "DD": 2.0}, {s: 4.0 for s in STATES})
    truth = np.eye(5)[[1, 4]]
    np.testing.assert_array_equal(quality_labels([1.5, 1.5], truth, th), [1, 0])


def test_threshold_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        QualityThresholds({s: 2.0 for s in STATES}, {s: 1.0 for s in STATES})
    with pytest.raises(ValueError):
        QualityThresholds({"LD": 1.0}, {"LD": 2.0})
    th = calibrate_thresholds(logistic_curves(), source="abc")
    th.save(tmp_path / "t.json")
    assert QualityThresholds.load(tmp_path / "t.json") == th


def test_curves_from_predictions():
    truth = np.eye(5)[[1, 1, 4, 4]]
    pred = np.full((4, 5), 0.2)
    curves = mae_curves_from_predictions(pred, truth, [0.1, 0.2, 6.9, 7.0], bins=7)
    assert curves["LD"].counts[0] == 2 and curves["DD"].counts[-1] == 2
    assert curves["LD"].mean_mae[0] == pytest.approx(0.32)
    assert not curves["CD"].available
    np.testing.assert_allclose(sample_mae(pred, truth), 0.32)
    assert curves_hash(curves) == curves_hash(mae_curves_from_predictions(pred, truth, [0.1, 0.2, 6.9, 7.0], bins=7))


def test_spearman_of_monotone_curve():
    assert curve("LD", logistic(CENTERS)).spearman() == pytest.approx(1.0)


class Fixed:
    def __init__(self, probs):
        self.probs = np.asarray(probs, float)

    def predict_proba(self, X):
        return self.probs


def test_correlation_report_ordering():
    truth = np.eye(5)[[4] * 9]
    # high-quality samples predicted right, low-quality ones wrong
    pred = np.eye(5)[[4, 4, 4, 4, 4, 1, 4, 1, 1]]
    quality = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    rep = validate_quality_correlation(None, [Fixed(pred)], np.zeros((9, 4, 4)), truth, min_count=3, quality=quality)
    assert rep.counts == {"high": 3, "moderate": 3, "low": 3}
    assert rep.accuracy_decreasing and rep.mae_increasing
    assert rep.accuracy["high"]["mean"] == 1.0


def test_correlation_report_excludes_small_classes():
    truth = np.eye(5)[[4] * 5]
    quality = np.array([0, 0, 0, 0, 2])
    rep = validate_quality_correlation(None, [Fixed(truth)], np.zeros((5, 4, 4)), truth, min_count=2, quality=quality)
    assert set(rep.excluded) == {"moderate", "low"}
    assert rep.accuracy_decreasing is None


def test_train_dqc_warns_on_rare_class():
    from qdtune.neuralnet import NetworkSpec, dense, layer

    tiny = NetworkSpec(layers=(layer("avgpool"), dense(3), layer("softmax")), outputs=3)
    x = np.random.default_rng(0).normal(size=(40, 12, 12))
    q = np.array(["high"] * 20 + ["low"] * 20)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        models = train_dqc(x, q, seeds=(0, 1), architecture=tiny, epochs=1)
    assert any("moderate" in str(m.message) for m in w)
    assert len(models) == 2
