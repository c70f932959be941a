import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from qdtune.estimators import GradientPreprocessor, QualityController, StateEstimator, ensemble_proba, preprocess
from qdtune.neuralnet import NetworkSpec, dense, layer
from qdtune.validation import check_label_vector, check_targets

TINY = NetworkSpec(layers=(layer("avgpool"), dense(5), layer("softmax")), outputs=5, name="tiny")


def test_preprocess_standardizes_each_image():
    rng = np.random.default_rng(0)
    x = rng.normal(3, 5, size=(4, 10, 10))
    p = preprocess(x)
    np.testing.assert_allclose(p.mean(axis=(1, 2)), 0, atol=1e-12)
    np.testing.assert_allclose(p.std(axis=(1, 2)), 1, atol=1e-12)


def test_preprocess_constant_image_is_zero():
    assert not preprocess(np.full((1, 5, 5), 7.0)).any()


@pytest.mark.parametrize("clip", [False, True])
def test_preprocess_affine_invariance(clip):
    x = np.random.default_rng(1).normal(size=(3, 12, 12))
    np.testing.assert_allclose(preprocess(2.5 * x + 4, clip), preprocess(x, clip), atol=1e-9)


def test_clip_bounds_outliers():
    x = np.random.default_rng(2).normal(size=(1, 20, 20))
    x[0, 0, 0] = 1e4
    assert preprocess(x, clip=True).max() < 3


def test_transformer_in_pipeline():
    x = np.random.default_rng(0).normal(size=(2, 6, 6))
    pipe = make_pipeline(GradientPreprocessor(clip=True))
    np.testing.assert_array_equal(pipe.fit_transform(x), preprocess(x, True))


def test_get_params_and_clone():
    est = StateEstimator(epochs=3, clip=True, random_state=5)
    assert clone(est).get_params() == est.get_params()


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        StateEstimator().predict_proba(np.zeros((1, 30, 30)))


def test_fit_predict_and_save(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 8, 8))
    y = rng.dirichlet(np.ones(5), size=40)
    est = StateEstimator(architecture=TINY, epochs=2, batch_size=8, random_state=3).fit(x, y)
    p = est.predict_proba(x)
    assert p.shape == (40, 5) and np.allclose(p.sum(axis=1), 1)
    assert 0 <= est.score(x, y) <= 1
    back = StateEstimator.load(est.save(tmp_path / "m"))
    np.testing.assert_array_equal(back.predict_proba(x), p)
    again = StateEstimator(architecture=TINY, epochs=2, batch_size=8, random_state=3).fit(x, y)
    np.testing.assert_array_equal(again.predict_proba(x), p)
    stacked = ensemble_proba([est, again], x)
    assert stacked.shape == (2, 40, 5)


def test_quality_controller_string_labels():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 12, 12))
    y = np.array(["high", "moderate", "low", "low"] * 5)
    tiny = NetworkSpec(layers=(layer("avgpool"), dense(3), layer("softmax")), outputs=3)
    est = QualityController(architecture=tiny, epochs=1).fit(x, y)
    assert set(est.predict_quality(x)) <= {"high", "moderate", "low"}


def test_architecture_output_mismatch():
    with pytest.raises(ValueError):
        StateEstimator(architecture="dqc", epochs=1).fit(np.zeros((10, 30, 30)), np.zeros(10, int))


def test_check_targets_forms():
    np.testing.assert_array_equal(check_targets([0, 2], 3), [[1, 0, 0], [0, 0, 1]])
    np.testing.assert_array_equal(check_targets(["b"], 2, ("a", "b")), [[0, 1]])
    for bad in ([3], [[0.5, 0.4, 0.0]], ["c"]):
        with pytest.raises(ValueError):
            check_targets(bad, 3, ("a", "b", "z"))


def test_check_images_rejects_bad_shapes():
    with pytest.raises(ValueError):
        preprocess(np.zeros((2, 3, 4, 5)))
    with pytest.raises(ValueError):
        preprocess(np.full((1, 3, 3), np.nan))


def test_check_label_vector():
    check_label_vector([0.2] * 5)
    with pytest.raises(ValueError):
        check_label_vector([0.5] * 5)
