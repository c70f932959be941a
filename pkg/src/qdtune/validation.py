"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils import check_array


def check_images(X, dtype=np.float64) -> np.ndarray:
    """Validate a batch of 2D images, shape ``(n, H, W)``; a single image is promoted."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected images of shape (n, H, W), got {X.shape}")
    return check_array(X, allow_nd=True, dtype=dtype, ensure_min_samples=1)


def check_targets(y, n_classes: int, classes=None, atol: float = 1e-4) -> np.ndarray:
    """Return targets as ``(n, n_classes)`` probability rows.

    Accepts integer class indices, class names from ``classes``, or rows that
    already sum to one (fractional labels).
    """
    y = np.asarray(y)
    if y.ndim == 2:
        y = check_array(y, dtype=np.float64)
        if y.shape[1] != n_classes:
            raise ValueError(f"label vectors need {n_classes} entries, got {y.shape[1]}")
        if np.any(y < -atol) or not np.allclose(y.sum(axis=1), 1.0, atol=atol):
            raise ValueError("label vectors must be non-negative and sum to 1")
        return y
    if y.ndim != 1:
        raise ValueError("labels must be class indices or probability rows")
    if classes is not None and y.dtype.kind in "UO":
        lookup = {c: i for i, c in enumerate(classes)}
        try:
            y = np.array([lookup[v] for v in y])
        except KeyError as exc:
            raise ValueError(f"unknown class label {exc.args[0]!r}") from None
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"class indices must lie in [0, {n_classes})")
    return np.eye(n_classes)[y]


def check_label_vector(p, n: int = 5, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"expected a normalized length-{n} probability vector")
    return p
