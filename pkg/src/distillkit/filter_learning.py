"""Learning directional-difference filter weights for cover/stego separation.

The residual ``R = sum_p w_p (Z^p - Z)`` is linear in the weights. During
training the quantizer ``clamp(round(R / c), -T, T)`` is replaced by its
straight-through surrogate ``clamp(R / c, -T, T)`` and the histogram uses
linear-interpolation (triangular) binning, which makes the whole loss
piecewise smooth in the weights. Evaluation uses the hard quantizer and an
ordinary histogram.

A logistic head on the histogram features is trained jointly; all parameters
are updated with :func:`distillkit.optim.sgd_momentum_step`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .optim import MomentumState, sgd_momentum_step
from .residuals import QuantizerParams, directional_differences, quantize_truncate

NEIGHBOURS_8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
NEIGHBOURS_4 = ((-1, 0), (0, -1), (0, 1), (1, 0))


@dataclass
class FilterModel:
    offsets: tuple
    weights: np.ndarray
    head: np.ndarray
    bias: float
    quantizer: QuantizerParams = field(default_factory=QuantizerParams)
    losses: list = field(default_factory=list)

    def features(self, image):
        """Hard-quantized residual histogram (evaluation path)."""
        diffs = directional_differences(image, self.offsets)
        rq = quantize_truncate(np.tensordot(self.weights, diffs, axes=1), self.quantizer)
        t = self.quantizer.t_trunc
        return np.bincount((rq + t).ravel(), minlength=2 * t + 1) / rq.size

    def predict(self, images):
        scores = np.array([self.head @ self.features(img) + self.bias for img in images])
        return (scores > 0).astype(np.int64)


def _soft_histogram(diffs, weights, q):
    """Triangular-binned histogram of the surrogate residual, plus what backward needs."""
    t = q.t_trunc
    r = np.tensordot(weights, diffs, axes=1) / q.step
    inside = np.abs(r) < t
    s = np.clip(r, -t, t)
    bins = np.arange(-t, t + 1, dtype=np.float64)[:, None, None]
    dist = s[None] - bins
    tri = np.maximum(0.0, 1.0 - np.abs(dist))
    hist = tri.reshape(len(bins), -1).mean(axis=1)
    return hist, (dist, inside)


def filter_loss(diffs_list, labels, weights, head, bias, q, l2=0.0):
    """Mean logistic loss and its gradients w.r.t. ``(weights, head, bias)``."""
    n = len(diffs_list)
    loss = 0.0
    g_w = np.zeros_like(weights)
    g_head = np.zeros_like(head)
    g_bias = 0.0
    for diffs, y in zip(diffs_list, labels):
        hist, (dist, inside) = _soft_histogram(diffs, weights, q)
        score = head @ hist + bias
        loss += np.logaddexp(0.0, score) - y * score
        d_score = (1.0 / (1.0 + np.exp(-score)) - y) / n
        g_head += d_score * hist
        g_bias += d_score
        npix = dist[0].size
        # d tri / d s = -sign(dist) where |dist| < 1
        d_tri = np.where(np.abs(dist) < 1.0, -np.sign(dist), 0.0)
        d_s = np.tensordot(head, d_tri, axes=1) * (d_score / npix)
        d_r = np.where(inside, d_s, 0.0) / q.step
        g_w += np.tensordot(diffs, d_r, axes=([1, 2], [0, 1]))
    loss = loss / n + 0.5 * l2 * float(head @ head)
    g_head += l2 * head
    return loss, g_w, g_head, g_bias


def learn_filter_weights(covers, stegos, initial_weights=None, offsets=NEIGHBOURS_4, epochs=100,
                         lr=0.5, momentum=0.9, quantizer=None, l2=0.0):
    """Fit filter weights (and a logistic head) to separate covers from stegos.

    Full-batch momentum SGD over all pairs. Returns a :class:`FilterModel`
    whose ``losses`` holds the training loss before each epoch and after the
    last one.
    """
    if len(covers) == 0 or len(covers) != len(stegos):
        raise ConfigError("need a non-empty, equal number of cover and stego images")
    q = (quantizer or QuantizerParams()).validate()
    offsets = tuple(tuple(o) for o in offsets)
    if initial_weights is None:
        initial_weights = np.full(len(offsets), 1.0 / len(offsets))
    weights = np.array(initial_weights, dtype=np.float64)
    if weights.shape != (len(offsets),):
        raise ConfigError(f"expected {len(offsets)} initial weights, got shape {weights.shape}")
    diffs_list = [directional_differences(img, offsets) for img in covers] + \
                 [directional_differences(img, offsets) for img in stegos]
    labels = np.concatenate([np.zeros(len(covers)), np.ones(len(stegos))])
    head = np.zeros(2 * q.t_trunc + 1)
    bias = np.zeros(1)
    states = [MomentumState.zeros_like(p, momentum, lr) for p in (weights, head, bias)]
    losses = []
    for _ in range(epochs):
        loss, g_w, g_head, g_bias = filter_loss(diffs_list, labels, weights, head, bias[0], q, l2)
        losses.append(loss)
        weights = sgd_momentum_step(weights, g_w, states[0])
        head = sgd_momentum_step(head, g_head, states[1])
        bias = sgd_momentum_step(bias, np.array([g_bias]), states[2])
    losses.append(filter_loss(diffs_list, labels, weights, head, bias[0], q, l2)[0])
    return FilterModel(offsets, weights, head, float(bias[0]), q, losses)
