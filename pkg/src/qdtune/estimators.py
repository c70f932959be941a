"""scikit-learn compatible wrappers around the from-scratch CNNs.

Both classifiers take raw gradient images ``(n, H, W)``, standardize them per
image and fit one network. Ensembles are plain lists of fitted estimators.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import neuralnet
from .architectures import ARCHITECTURES
from .simcore import STATES
from .validation import check_images, check_targets

QUALITY_CLASSES = ("high", "moderate", "low")


def preprocess(images, clip: bool = False, percentiles=(2.0, 98.0)) -> np.ndarray:
    """Optionally clip each image to its 2nd/98th percentiles, then standardize it.

    Standard deviations below 1e-8 are floored, so constant images map to zero.
    """
    x = check_images(images)
    if clip:
        lo, hi = np.percentile(x, percentiles, axis=(1, 2), keepdims=True)
        x = np.clip(x, lo, hi)
    mean = x.mean(axis=(1, 2), keepdims=True)
    std = np.maximum(x.std(axis=(1, 2), keepdims=True), 1e-8)
    return (x - mean) / std


class GradientPreprocessor(TransformerMixin, BaseEstimator):
    """Stateless per-image standardization with optional percentile clipping."""

    def __init__(self, clip=False):
        self.clip = clip

    def fit(self, X, y=None):
        check_images(X)
        return self

    def transform(self, X):
        return preprocess(X, clip=self.clip)


class _NetworkClassifier(ClassifierMixin, BaseEstimator):
    _default_architecture = "noiseless"
    classes_: tuple

    def __init__(self, architecture=None, epochs=30, batch_size=64, learning_rate=None, patience=5,
                 validation_fraction=0.1, clip=False, random_state=0):
        self.architecture = architecture
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.clip = clip
        self.random_state = random_state

    def _spec(self):
        arch = self.architecture or self._default_architecture
        spec = ARCHITECTURES[arch] if isinstance(arch, str) else arch
        if spec.outputs != len(self._classes):
            raise ValueError(f"architecture has {spec.outputs} outputs, expected {len(self._classes)}")
        return spec

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on gradient images; without an explicit validation set a seeded
        ``validation_fraction`` of ``X`` is held out for early stopping."""
        X = preprocess(X, self.clip)
        Y = check_targets(y, len(self._classes), self._classes)
        if len(X) != len(Y):
            raise ValueError("X and y have different lengths")
        if X_val is None:
            perm = np.random.default_rng(self.random_state).permutation(len(X))
            n_val = max(1, int(round(self.validation_fraction * len(X))))
            if n_val >= len(X):
                raise ValueError("not enough samples to hold out a validation set")
            val, tr = perm[:n_val], perm[n_val:]
            X, Y, X_val, Y_val = X[tr], Y[tr], X[val], Y[val]
        else:
            X_val = preprocess(X_val, self.clip)
            Y_val = check_targets(y_val, len(self._classes), self._classes)
        seed = np.random.SeedSequence(self.random_state)
        init_seed, train_seed = seed.spawn(2)
        self.network_ = neuralnet.build(self._spec(), seed=init_seed, input_shape=X.shape[1:])
        self.history_ = neuralnet.train(
            self.network_, X, Y, X_val, Y_val, epochs=self.epochs, batch_size=self.batch_size,
            seed=train_seed, patience=self.patience, lr=self.learning_rate,
        )
        self.classes_ = self._classes
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        return self.network_.predict_proba(preprocess(X, self.clip)).astype(np.float64)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y, sample_weight=None) -> float:
        """Fraction of samples whose predicted argmax matches the label's argmax."""
        Y = check_targets(y, len(self._classes), self._classes)
        return float(np.mean(self.predict(X) == np.argmax(Y, axis=1)))

    def save(self, path):
        check_is_fitted(self, "network_")
        params = {k: v for k, v in self.get_params().items() if k != "architecture"}
        params["architecture"] = self.network_.spec.name
        return neuralnet.save_checkpoint(self.network_, path, extra={"estimator": type(self).__name__,
                                                                    "params": params})

    @classmethod
    def load(cls, path):
        net, extra = neuralnet.load_checkpoint(path)
        params = dict(extra.get("params", {}))
        params["architecture"] = net.spec
        est = cls(**params)
        est.network_ = net
        est.history_ = net.history
        est.classes_ = est._classes
        est.n_features_in_ = int(np.prod(net.input_shape))
        return est


class StateEstimator(_NetworkClassifier):
    """Five-state (ND, LD, CD, RD, DD) device-state classifier; fits fractional labels."""

    _classes = STATES
    _default_architecture = "noiseless"


class QualityController(_NetworkClassifier):
    """Three-class (high, moderate, low) data-quality classifier."""

    _classes = QUALITY_CLASSES
    _default_architecture = "dqc"

    def predict_quality(self, X) -> np.ndarray:
        return np.array(QUALITY_CLASSES)[self.predict(X)]


def ensemble_proba(models, X) -> np.ndarray:
    """Per-model probabilities stacked to ``(n_models, n, n_classes)``."""
    X = check_images(X)
    return np.stack([m.predict_proba(X) for m in models])
