"""Sparse multinomial logistic regression by proximal gradient descent.

Full-batch ISTA: a gradient step on the softmax cross-entropy followed by
soft-thresholding of the weight matrix (the intercept is never
penalized), which produces exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ParameterError
from .network import softmax

__all__ = ["FinalLayerResult", "train_final_layer"]


@dataclass
class FinalLayerResult:
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    sparsity: float  # fraction of exactly-zero weights
    loss_history: list = field(default_factory=list)


def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def train_final_layer(
    features,
    labels,
    lam: float = 0.0007,
    n_iters: int = 1000,
    n_classes: int | None = None,
) -> FinalLayerResult:
    """Fit an L1-regularized multinomial logistic classifier.

    Minimizes mean cross-entropy plus lam * ||W||_1 with ISTA at step size
    1/L, L = smax(X_aug)^2 / (2N), which keeps the objective monotone.
    Starts from zero weights, so a lam above the gradient scale yields an
    exactly-zero (intercept-only) classifier.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ParameterError("features (N, D) and labels (N,) must share N")
    lam = float(lam)
    if lam < 0.0:
        raise ParameterError(f"lam must be >= 0, got {lam}")
    present = np.unique(y)
    if present.size < 2:
        raise ParameterError("labels contain a single class")
    d_z = int(present.max()) + 1 if n_classes is None else int(n_classes)
    if d_z <= int(present.max()):
        raise ParameterError("n_classes too small for the labels present")
    n, d = x.shape

    aug = np.concatenate([x, np.ones((n, 1))], axis=1)
    lipschitz = float(np.linalg.norm(aug, 2)) ** 2 / (2.0 * n)
    step = 1.0 / lipschitz

    onehot = np.zeros((n, d_z))
    onehot[np.arange(n), y] = 1.0
    w = np.zeros((d_z, d))
    b = np.zeros(d_z)
    history = []
    for it in range(int(n_iters)):
        p = softmax(x @ w.T + b)
        ce = float(-np.log(np.maximum(p[np.arange(n), y], 1e-300)).mean())
        obj = ce + lam * float(np.abs(w).sum())
        if not np.isfinite(obj):
            raise DivergenceError(f"non-finite objective at iteration {it}", it)
        history.append(obj)
        g = (p - onehot) / n
        w = _soft_threshold(w - step * (g.T @ x), step * lam)
        b = b - step * g.sum(axis=0)
    sparsity = float((w == 0.0).mean())
    return FinalLayerResult(weights=w, bias=b, sparsity=sparsity, loss_history=history)
