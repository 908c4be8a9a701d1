"""Linear discriminant projection used to check how well content and style
classes cluster in the adapter feature space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .features import PromptFeature

RIDGE_DELTA = 1e-4


@dataclass(frozen=True)
class LdaResult:
    projection: np.ndarray  # (N, 2)
    purity: float
    axes: np.ndarray  # (D, 2) discriminant directions
    centroids: np.ndarray  # (n_classes, 2)


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        x = features.astype(np.float64)
        if x.ndim != 2:
            raise ValueError(f"feature matrix must be (N, D), got {x.shape}")
        return x
    return np.stack([f.flat() if isinstance(f, PromptFeature) else np.asarray(f, dtype=np.float64).reshape(-1) for f in features])


def lda_separability(features: Sequence[PromptFeature] | np.ndarray, labels, n_classes: int) -> LdaResult:
    """Project features onto the first two discriminant axes and score purity.

    Purity is nearest-centroid accuracy in the 2D projection. A singular
    within-class scatter matrix triggers a ridge-regularized solve (delta
    scaled by the mean scatter diagonal, so the result is invariant to global
    feature rescaling) with a warning.
    """
    x = _as_matrix(features)
    y = np.asarray(labels)
    if len(x) != len(y):
        raise ValueError(f"{len(x)} feature rows vs {len(y)} labels")
    classes = np.unique(y)
    if len(classes) != n_classes:
        raise ValueError(f"expected {n_classes} classes, found {len(classes)}")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    counts = np.array([(y == c).sum() for c in classes])
    if counts.min() < 2:
        raise ValueError("every class needs at least 2 samples")

    dim = x.shape[1]
    mean_all = x.mean(axis=0)
    s_w = np.zeros((dim, dim))
    s_b = np.zeros((dim, dim))
    for c, n_c in zip(classes, counts):
        xc = x[y == c]
        mu_c = xc.mean(axis=0)
        centered = xc - mu_c
        s_w += centered.T @ centered
        delta_mu = (mu_c - mean_all)[:, None]
        s_b += n_c * (delta_mu @ delta_mu.T)

    try:
        linalg.cholesky(s_w)
        s_w_solve = s_w
    except linalg.LinAlgError:
        warnings.warn(
            "within-class scatter is singular; solving with ridge regularization",
            RuntimeWarning,
            stacklevel=2,
        )
        scale = np.trace(s_w) / dim
        if scale <= 0:
            scale = 1.0
        s_w_solve = s_w + RIDGE_DELTA * scale * np.eye(dim)

    eigvals, eigvecs = linalg.eigh(s_b, s_w_solve)
    order = np.argsort(eigvals)[::-1]
    axes = eigvecs[:, order[:2]]
    projection = x @ axes

    centroids = np.stack([projection[y == c].mean(axis=0) for c in classes])
    d2 = ((projection[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assigned = classes[np.argmin(d2, axis=1)]
    purity = float(np.mean(assigned == y))
    return LdaResult(projection=projection, purity=purity, axes=axes, centroids=centroids)
