"""Steganalysis residuals: ±1 embedding simulator, predictor residuals,
quantization, residual maps and co-occurrence features.

All residual maps cover the valid region only (no padding). Images are
indexed ``Z[i, j]`` with ``i`` the row and ``j`` the column.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .nn import conv_output_size

# -- embedding --------------------------------------------------------------


@dataclass
class StegoSignal:
    """Embedding change matrix ``E`` (entries -1/0/+1) and its support."""

    changes: np.ndarray
    positions: np.ndarray

    @property
    def sigma(self):
        return len(self.positions)


def _as_image(image, name="image"):
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    return arr


def local_variance(image, radius=1):
    img = np.pad(np.asarray(image, dtype=np.float64), radius, mode="reflect")
    win = np.lib.stride_tricks.sliding_window_view(img, (2 * radius + 1, 2 * radius + 1))
    return win.var(axis=(-2, -1))


def embed(cover, change_rate, seed=0, mode="uniform"):
    """Simulate ±1 embedding at ``floor(change_rate * m * n)`` positions.

    ``mode="uniform"`` picks positions uniformly at random; ``mode="texture"``
    takes the positions of highest local variance first (random tie-break).
    Signs are balanced (half +1, half -1, shuffled) and forced inward at 0 and
    255 so that no pixel leaves [0, 255]. Returns ``(stego, signal)``.
    """
    u = _as_image(cover, "cover")
    if u.min() < 0 or u.max() > 255:
        raise DataError("cover pixels must lie in [0, 255]")
    m, n = u.shape
    if not 0.0 < change_rate <= 1.0:
        raise ConfigError(f"change_rate must lie in (0, 1], got {change_rate}")
    k = int(np.floor(change_rate * m * n))
    if k < 1:
        raise ConfigError(f"change_rate {change_rate} selects no pixel of a {m}x{n} image")
    rng = np.random.default_rng(seed)
    if mode == "uniform":
        flat = rng.choice(m * n, size=k, replace=False)
    elif mode == "texture":
        tiebreak = rng.permutation(m * n)
        flat = np.lexsort((tiebreak, -local_variance(u).ravel()))[:k]
    else:
        raise ConfigError(f"unknown embedding mode {mode!r}; expected 'uniform' or 'texture'")
    signs = np.concatenate([np.ones(k // 2, np.int16), -np.ones(k // 2, np.int16)])
    if k % 2:
        signs = np.append(signs, np.int16(rng.choice((-1, 1))))
    rng.shuffle(signs)
    vals = u.ravel()[flat]
    signs[vals >= 255] = -1
    signs[vals <= 0] = 1
    changes = np.zeros(m * n, dtype=np.int16)
    changes[flat] = signs
    changes = changes.reshape(m, n)
    stego = (u.astype(np.int16) + changes).astype(np.uint8)
    pos = np.sort(flat)
    return stego, StegoSignal(changes, np.stack([pos // n, pos % n], axis=1))


# -- predictor residuals ----------------------------------------------------


@dataclass
class Predictor:
    """Linear neighbourhood predictor ``f(M) = sum_p w_p Z[i+di, j+dj]`` of order ``lam``.

    ``lam`` defaults to ``sum(weights)``, the directional-difference form.
    """

    offsets: tuple
    weights: tuple
    lam: float = None

    def __post_init__(self):
        self.offsets = tuple((int(a), int(b)) for a, b in self.offsets)
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.offsets) != len(self.weights) or not self.offsets:
            raise ConfigError("predictor needs one weight per offset and at least one offset")
        if (0, 0) in self.offsets:
            raise ConfigError("predictor neighbourhood must exclude the centre offset (0, 0)")
        if len(set(self.offsets)) != len(self.offsets):
            raise ConfigError("duplicate predictor offsets")
        if self.lam is None:
            self.lam = float(sum(self.weights))

    @property
    def radius(self):
        return max(max(abs(a), abs(b)) for a, b in self.offsets)


def _check_offsets(offsets):
    offsets = [(int(a), int(b)) for a, b in offsets]
    if (0, 0) in offsets:
        raise ConfigError("offsets must exclude the centre (0, 0)")
    return offsets


def _shifted(z, r, di, dj):
    m, n = z.shape
    return z[r + di:m - r + di, r + dj:n - r + dj]


def residual_predict(image, predictor):
    """``f(M[i,j]) - lam * Z[i,j]`` at every centre whose window fits."""
    z = np.asarray(_as_image(image), dtype=np.float64)
    r = predictor.radius
    conv_output_size(z.shape[0], z.shape[1], 2 * r + 1, 1)
    acc = np.zeros((z.shape[0] - 2 * r, z.shape[1] - 2 * r))
    for (di, dj), w in zip(predictor.offsets, predictor.weights):
        acc += w * _shifted(z, r, di, dj)
    return acc - predictor.lam * _shifted(z, r, 0, 0)


def directional_residual(image, offsets, weights):
    """``sum_p w_p (Z[i+di, j+dj] - Z[i,j])`` over the valid region."""
    offsets = _check_offsets(offsets)
    if len(offsets) != len(weights) or not offsets:
        raise ConfigError("need one weight per offset and at least one offset")
    z = np.asarray(_as_image(image), dtype=np.float64)
    r = max(max(abs(a), abs(b)) for a, b in offsets)
    conv_output_size(z.shape[0], z.shape[1], 2 * r + 1, 1)
    centre = _shifted(z, r, 0, 0)
    acc = np.zeros_like(centre)
    for (di, dj), w in zip(offsets, weights):
        acc += w * (_shifted(z, r, di, dj) - centre)
    return acc


def directional_differences(image, offsets):
    """Stack of ``Z[i+di, j+dj] - Z[i,j]`` maps, one per offset."""
    offsets = _check_offsets(offsets)
    z = np.asarray(_as_image(image), dtype=np.float64)
    r = max(max(abs(a), abs(b)) for a, b in offsets)
    conv_output_size(z.shape[0], z.shape[1], 2 * r + 1, 1)
    centre = _shifted(z, r, 0, 0)
    return np.stack([_shifted(z, r, di, dj) - centre for di, dj in offsets])


def residual_first_order(image):
    """Horizontal first difference ``Z[i, j+1] - Z[i, j]``; width shrinks by one."""
    z = np.asarray(_as_image(image), dtype=np.float64)
    if z.shape[1] < 2:
        raise DataError("first-order residual needs at least two columns")
    return z[:, 1:] - z[:, :-1]


def residual_second_order(image):
    """``2Z[i,j-1] - Z[i-1,j-1] - Z[i+1,j-1] + 2Z[i+1,j] - 4Z[i,j]`` on interior pixels.

    Implemented exactly as this (asymmetric) kernel reads.
    """
    z = np.asarray(_as_image(image), dtype=np.float64)
    if min(z.shape) < 3:
        raise DataError("second-order residual needs an image of at least 3x3")
    s = lambda di, dj: _shifted(z, 1, di, dj)
    return (2 * s(0, -1) - s(-1, -1) - s(1, -1) + 2 * s(1, 0)) - 4 * s(0, 0)


def residual_minmax(image, mode="min"):
    """Min or max of the horizontal and vertical second differences."""
    z = np.asarray(_as_image(image), dtype=np.float64)
    if min(z.shape) < 3:
        raise DataError("min/max residual needs an image of at least 3x3")
    s = lambda di, dj: _shifted(z, 1, di, dj)
    horiz = s(0, -1) + s(0, 1) - 2 * s(0, 0)
    vert = s(-1, 0) + s(1, 0) - 2 * s(0, 0)
    if mode == "min":
        return np.minimum(horiz, vert)
    if mode == "max":
        return np.maximum(horiz, vert)
    raise ConfigError(f"mode must be 'min' or 'max', got {mode!r}")


# -- quantization -----------------------------------------------------------


@dataclass
class QuantizerParams:
    step: float = 1.0
    t_trunc: int = 2

    def validate(self, lam=None, strict=False):
        if not self.step > 0:
            raise ConfigError(f"quantization step must be > 0, got {self.step}")
        if int(self.t_trunc) != self.t_trunc or self.t_trunc < 1:
            raise ConfigError(f"truncation bound must be an integer >= 1, got {self.t_trunc}")
        if strict and lam is not None:
            allowed = (1.0, 2.0) if lam == 1 else (lam, 1.5 * lam, 2 * lam) if lam > 1 else None
            if allowed is not None and not any(np.isclose(self.step, a) for a in allowed):
                raise ConfigError(f"step {self.step} not allowed for order {lam}; choose from {allowed}")
        return self


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_truncate(residual, q=None):
    """``clamp(round(R / c), -T, T)`` with half-away-from-zero rounding; int64 output."""
    q = (q or QuantizerParams()).validate()
    r = np.asarray(residual, dtype=np.float64)
    out = np.clip(round_half_away(r / q.step), -q.t_trunc, q.t_trunc)
    return out.astype(np.int64)


# -- residual maps ----------------------------------------------------------


def residual_map_scan(image, filt, stride=1):
    """Slide a ``k x k`` weight filter over the image in row-major order.

    Runs through the same kernel as a single-channel, zero-bias convolution,
    so the result is bitwise identical to :func:`distillkit.nn.conv_forward`.
    """
    z = np.asarray(_as_image(image), dtype=np.float64)
    w = np.asarray(filt, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ConfigError(f"filter must be square k x k, got shape {w.shape}")
    conv_output_size(z.shape[0], z.shape[1], w.shape[0], stride)
    out = kernels.conv2d_forward(z[None, None], w[None, None], np.zeros(1), stride)
    return out[0, 0]


def load_filter_spec(path):
    """Read ``{"offsets": [[di, dj], ...], "weights": [...], "lambda": optional}``."""
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"name", "offsets", "weights", "lambda"}
    if unknown:
        raise ConfigError(f"{path}: unknown filter keys {sorted(unknown)}")
    try:
        return Predictor(doc["offsets"], doc["weights"], doc.get("lambda"))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing filter key {exc}") from None


# -- co-occurrence ----------------------------------------------------------

_AXES = {"horizontal": 1, "vertical": 0}


def cooccurrence_features(rq, order=3, direction="horizontal", t_trunc=2):
    """Normalised histogram of ``order`` consecutive values along a direction.

    Bin index of a tuple ``(v_0 .. v_{d-1})`` is ``sum_p (v_p + T) * (2T+1)**(d-1-p)``.
    """
    rq = np.asarray(rq)
    if rq.ndim != 2:
        raise DataError(f"residual map must be 2-D, got shape {rq.shape}")
    if direction not in _AXES:
        raise ConfigError(f"direction must be one of {sorted(_AXES)}, got {direction!r}")
    if order < 2:
        raise ConfigError(f"co-occurrence order must be >= 2, got {order}")
    axis = _AXES[direction]
    if rq.shape[axis] < order:
        raise DataError(f"map extent {rq.shape[axis]} along {direction} is shorter than order {order}")
    if not np.all(rq == np.round(rq)):
        raise DataError("co-occurrence input must be integer valued")
    rq = rq.astype(np.int64)
    if rq.size and (rq.min() < -t_trunc or rq.max() > t_trunc):
        raise DataError(f"residual values must lie in [-{t_trunc}, {t_trunc}]")
    counts = kernels.cooccurrence_counts(np.ascontiguousarray(rq), t_trunc, order, axis)
    return counts / counts.sum()


RESIDUAL_KINDS = ("first", "second", "min", "max")


def residual_by_name(image, kind):
    if kind == "first":
        return residual_first_order(image)
    if kind == "second":
        return residual_second_order(image)
    if kind in ("min", "max"):
        return residual_minmax(image, kind)
    raise ConfigError(f"unknown residual {kind!r}; expected one of {RESIDUAL_KINDS}")


def extract_features(image, kinds=("first", "min", "max"), q=None, order=3,
                     directions=("horizontal",)):
    """Concatenated co-occurrence vectors of quantized residuals."""
    q = (q or QuantizerParams()).validate()
    parts = []
    for kind in kinds:
        rq = quantize_truncate(residual_by_name(image, kind), q)
        for d in directions:
            parts.append(cooccurrence_features(rq, order, d, q.t_trunc))
    return np.concatenate(parts)


# -- detector ---------------------------------------------------------------


class LogisticDetector:
    """L2-regularised logistic regression fitted by Newton's method on standardised features."""

    def __init__(self, l2=1e-2, max_iter=50, tol=1e-10):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def _design(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mean_) / self.scale_
        return np.hstack([z, np.ones((len(z), 1))])

    def fit(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.mean_ = x.mean(axis=0)
        sd = x.std(axis=0)
        self.scale_ = np.where(sd > 0, sd, 1.0)
        a = self._design(x)
        n, p = a.shape
        reg = np.full(p, self.l2)
        reg[-1] = 0.0
        w = np.zeros(p)
        for _ in range(self.max_iter):
            prob = 1.0 / (1.0 + np.exp(-(a @ w)))
            grad = a.T @ (prob - y) / n + reg * w
            hess = (a.T * (prob * (1 - prob))) @ a / n + np.diag(reg) + 1e-12 * np.eye(p)
            step = np.linalg.solve(hess, grad)
            w -= step
            if np.max(np.abs(step)) < self.tol:
                break
        self.coef_ = w
        return self

    def decision_function(self, x):
        return self._design(x) @ self.coef_

    def predict(self, x):
        return (self.decision_function(x) > 0).astype(np.int64)


@dataclass
class DetectionResult:
    labels: np.ndarray
    accuracy: float
    detector: LogisticDetector


def detect(features_cover, features_stego, test_features, test_labels=None, l2=1e-2):
    """Fit a logistic detector on cover (0) / stego (1) features and label the test set."""
    fc = np.atleast_2d(np.asarray(features_cover, dtype=np.float64))
    fs = np.atleast_2d(np.asarray(features_stego, dtype=np.float64))
    if len(fc) < 2 or len(fs) < 2:
        raise ConfigError(f"need >= 2 training examples per class, got {len(fc)} cover / {len(fs)} stego")
    x = np.vstack([fc, fs])
    y = np.concatenate([np.zeros(len(fc)), np.ones(len(fs))])
    det = LogisticDetector(l2).fit(x, y)
    labels = det.predict(np.atleast_2d(test_features))
    acc = None
    if test_labels is not None:
        acc = float(np.mean(labels == np.asarray(test_labels)))
    return DetectionResult(labels, acc, det)
