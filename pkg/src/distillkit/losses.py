"""Temperature softmax and cross-entropy."""

import numpy as np

from .errors import DomainError, ShapeError

LOG_EPS = 1e-12


def softmax_t(logits, T=1.0):
    """Softmax of ``logits / T`` along the last axis, max-subtracted for stability."""
    if not T > 0:
        raise DomainError(f"temperature must be > 0, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(probs, target):
    """``-sum(target * ln(max(probs, 1e-12)))`` along the last axis.

    ``target`` may be a probability vector (same shape as ``probs``) or an
    integer class label per row.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target)
    if target.shape != probs.shape:
        if np.issubdtype(target.dtype, np.integer) and target.shape == probs.shape[:-1]:
            target = one_hot(target.ravel(), probs.shape[-1]).reshape(probs.shape)
        else:
            raise ShapeError(f"cross_entropy: probs shape {probs.shape} vs target shape {target.shape}")
    return -np.sum(target * np.log(np.maximum(probs, LOG_EPS)), axis=-1)


def entropy(p):
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return -np.sum(np.where(nz, p * np.log(np.where(nz, p, 1.0)), 0.0), axis=-1)
