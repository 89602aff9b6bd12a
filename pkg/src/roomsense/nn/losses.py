"""Loss functions; each returns (scalar loss, gradient w.r.t. its input)."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .layers import sigmoid, softmax_over_classes


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy on logits, in the stable log-sum-exp form.

    Per element: max(z, 0) - z*y + log(1 + exp(-|z|)); gradient is
    (sigmoid(z) - y) / count.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"logits {z.shape} vs targets {y.shape}")
    per_elem = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per_elem.mean())
    grad = (sigmoid(z) - y) / z.size
    return loss, grad


def softmax_cross_entropy(logits: np.ndarray, onehot: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy over rows of (N, K) logits.

    Stable form: logsumexp(z) - <z, y> per row; gradient (softmax(z) - y) / N.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(onehot, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeError(f"logits {z.shape} vs targets {y.shape}")
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float((lse - (z * y).sum(axis=1)).mean())
    grad = (softmax_over_classes(z) - y) / z.shape[0]
    return loss, grad


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements; gradient 2*(pred-target)/count."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"pred {p.shape} vs target {t.shape}")
    diff = p - t
    loss = float((diff ** 2).mean())
    grad = 2.0 * diff / p.size
    return loss, grad
