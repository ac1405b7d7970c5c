"""Layers and the sequential network container.

Tensors are float64 numpy arrays. Layers operate on batches: convolution and
pooling take ``[batch, channels, height, width]``, dense layers take
``[batch, features]``.
"""

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, StateError


def conv_output_size(m, n, k, s):
    """Spatial size of a valid (unpadded) sliding-window map.

    Returns ``(floor((m - k) / s) + 1, floor((n - k) / s) + 1)``.
    """
    if k < 1 or s < 1:
        raise ConfigError(f"kernel size and stride must be >= 1, got k={k}, s={s}")
    if k > m or k > n:
        raise ConfigError(f"kernel size {k} exceeds image extent {m}x{n}")
    return (m - k) // s + 1, (n - k) // s + 1


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, cache=True):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def spec(self):
        return {"type": self.kind}

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called without a cached forward pass")
        return self._cache


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, rng=None):
        super().__init__()
        if min(in_channels, out_channels, kernel_size, stride) < 1:
            raise ConfigError("conv layer dimensions must be positive integers")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        rng = rng if rng is not None else np.random.default_rng(0)
        k2 = kernel_size * kernel_size
        self.params["weight"] = glorot_uniform(
            rng, (out_channels, in_channels, kernel_size, kernel_size),
            in_channels * k2, out_channels * k2)
        self.params["bias"] = np.zeros(out_channels)

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(
                f"conv expects input [{self.in_channels}, H, W], got {list(in_shape)}; "
                f"weights {list(self.params['weight'].shape)}")
        oh, ow = conv_output_size(in_shape[1], in_shape[2], self.kernel_size, self.stride)
        return (self.out_channels, oh, ow)

    def forward(self, x, cache=True):
        out = kernels.conv2d_forward(x, self.params["weight"], self.params["bias"], self.stride)
        self._cache = x if cache else None
        return out

    def backward(self, dout):
        x = self._cached()
        dx, dw, db = kernels.conv2d_backward(x, self.params["weight"], np.ascontiguousarray(dout), self.stride)
        self.grads["weight"] = dw
        self.grads["bias"] = db
        return dx

    def spec(self):
        return {"type": self.kind, "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "stride": self.stride}


class MaxPool2D(Layer):
    kind = "maxpool"

    def __init__(self, kernel_size, stride=None):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride or kernel_size

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool expects [C, H, W], got {list(in_shape)}")
        oh, ow = conv_output_size(in_shape[1], in_shape[2], self.kernel_size, self.stride)
        return (in_shape[0], oh, ow)

    def forward(self, x, cache=True):
        out, argmax = kernels.maxpool_forward(x, self.kernel_size, self.stride)
        self._cache = (x.shape, argmax) if cache else None
        return out

    def backward(self, dout):
        in_shape, argmax = self._cached()
        return kernels.maxpool_backward(np.ascontiguousarray(dout), argmax, in_shape, self.kernel_size, self.stride)

    def spec(self):
        return {"type": self.kind, "kernel_size": self.kernel_size, "stride": self.stride}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, cache=True):
        mask = x > 0
        self._cache = mask if cache else None
        return np.where(mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._cached(), dout, 0.0)


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, cache=True):
        self._cache = x.shape if cache else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cached())


class Dense(Layer):
    """Fully connected layer ``y = x @ W.T + b`` with ``W`` of shape [out, in]."""

    kind = "dense"

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ConfigError("dense layer sizes must be positive")
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = glorot_uniform(rng, (out_features, in_features), in_features, out_features)
        self.params["bias"] = np.zeros(out_features)

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"dense expects [{self.in_features}], got {list(in_shape)}")
        return (self.out_features,)

    def forward(self, x, cache=True):
        self._cache = x if cache else None
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        x = self._cached()
        self.grads["weight"] = dout.T @ x
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weight"]

    def spec(self):
        return {"type": self.kind, "in_features": self.in_features, "out_features": self.out_features}


_LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, ReLU, Flatten, Dense)}


def layer_from_spec(spec, rng=None):
    spec = dict(spec)
    kind = spec.pop("type", None)
    cls = _LAYER_TYPES.get(kind)
    if cls is None:
        raise ConfigError(f"unknown layer type {kind!r}; expected one of {sorted(_LAYER_TYPES)}")
    if cls in (Conv2D, Dense):
        spec["rng"] = rng
    try:
        return cls(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} layer spec: {exc}") from None


class Network:
    """Ordered stack of layers with parameters addressed as ``"<index>.<name>"``."""

    def __init__(self, layers=(), input_shape=None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self._forward_done = False
        if self.input_shape is not None:
            self.check_shapes(self.input_shape)

    @classmethod
    def from_spec(cls, layer_specs, input_shape, seed=0):
        rng = np.random.default_rng(seed)
        return cls([layer_from_spec(s, rng) for s in layer_specs], input_shape)

    def spec(self):
        return [layer.spec() for layer in self.layers]

    def check_shapes(self, in_shape):
        shape = tuple(in_shape)
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ConfigError as exc:
                raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
        return shape

    @property
    def num_classes(self):
        if self.input_shape is None:
            raise StateError("network has no declared input shape")
        return self.check_shapes(self.input_shape)[0]

    def parameters(self):
        return {f"{i}.{name}": arr for i, layer in enumerate(self.layers) for name, arr in layer.params.items()}

    def gradients(self):
        return {f"{i}.{name}": arr for i, layer in enumerate(self.layers) for name, arr in layer.grads.items()}

    def set_parameter(self, pid, value):
        idx, name = pid.split(".", 1)
        layer = self.layers[int(idx)]
        if layer.params[name].shape != value.shape:
            raise ShapeError(f"parameter {pid}: shape {value.shape} != {layer.params[name].shape}")
        layer.params[name] = value

    def num_parameters(self):
        return sum(p.size for p in self.parameters().values())

    def forward(self, batch, cache=True):
        x = np.asarray(batch, dtype=np.float64)
        self.check_shapes(x.shape[1:])
        for layer in self.layers:
            x = layer.forward(x, cache=cache)
        self._forward_done = cache
        return x

    def backward(self, loss_grad):
        if not self._forward_done:
            raise StateError("network_backward called without a cached forward pass")
        g = np.asarray(loss_grad, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return self.gradients()

    def predict_logits(self, batch, batch_size=256):
        x = np.asarray(batch, dtype=np.float64)
        chunks = [self.forward(x[i:i + batch_size], cache=False) for i in range(0, len(x), batch_size)]
        return np.concatenate(chunks) if chunks else np.empty((0, self.num_classes))


def conv_forward(x, layer):
    """Apply one :class:`Conv2D` to a single image ``[in, H, W]`` or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 3
    batch = x[None] if single else x
    if batch.ndim != 4:
        raise ShapeError(f"conv_forward expects [in, H, W] or [N, in, H, W], got {list(x.shape)}")
    layer.output_shape(batch.shape[1:])
    out = layer.forward(batch, cache=False)
    return out[0] if single else out


def network_forward(net, batch):
    return net.forward(batch, cache=True)


def network_backward(net, loss_grad):
    return net.backward(loss_grad)
