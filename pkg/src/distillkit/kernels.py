"""Hot numeric kernels.

Every kernel has two implementations: an explicit-loop version compiled with
numba (``*_nb``) and a vectorized numpy version (``*_np``). The module-level
names without suffix dispatch to one of them according to
:data:`distillkit._accel.USE_NUMBA`.

The convolution forward kernels in both flavours accumulate each output element
in the same order (channels outermost, then window rows, then window columns,
bias added last), so they agree bitwise with each other and with a plain
nested-loop reference.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


def out_dims(h, w, k, s):
    return (h - k) // s + 1, (w - k) // s + 1


# -- convolution ------------------------------------------------------------


@njit
def conv2d_forward_nb(x, weight, bias, stride):
    n_batch, n_in, h, w = x.shape
    n_out, _, k, _ = weight.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    out = np.empty((n_batch, n_out, oh, ow))
    for n in range(n_batch):
        for o in range(n_out):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for c in range(n_in):
                        for di in range(k):
                            for dj in range(k):
                                acc += weight[o, c, di, dj] * x[n, c, i * stride + di, j * stride + dj]
                    out[n, o, i, j] = acc + bias[o]
    return out


def conv2d_forward_np(x, weight, bias, stride):
    n_batch, n_in, h, w = x.shape
    n_out, _, k, _ = weight.shape
    oh, ow = out_dims(h, w, k, stride)
    acc = np.zeros((n_batch, n_out, oh, ow))
    for c in range(n_in):
        for di in range(k):
            for dj in range(k):
                patch = x[:, c, di:di + stride * (oh - 1) + 1:stride, dj:dj + stride * (ow - 1) + 1:stride]
                acc += weight[:, c, di, dj][None, :, None, None] * patch[:, None, :, :]
    return acc + bias[None, :, None, None]


@njit
def conv2d_backward_nb(x, weight, dout, stride):
    n_batch, n_in, h, w = x.shape
    n_out, _, k, _ = weight.shape
    _, _, oh, ow = dout.shape
    dx = np.zeros_like(x)
    dw = np.zeros_like(weight)
    db = np.zeros(n_out)
    for n in range(n_batch):
        for o in range(n_out):
            for i in range(oh):
                for j in range(ow):
                    g = dout[n, o, i, j]
                    db[o] += g
                    for c in range(n_in):
                        for di in range(k):
                            for dj in range(k):
                                r = i * stride + di
                                q = j * stride + dj
                                dw[o, c, di, dj] += g * x[n, c, r, q]
                                dx[n, c, r, q] += g * weight[o, c, di, dj]
    return dx, dw, db


def conv2d_backward_np(x, weight, dout, stride):
    n_batch, n_in, h, w = x.shape
    n_out, _, k, _ = weight.shape
    _, _, oh, ow = dout.shape
    dx = np.zeros_like(x)
    dw = np.empty_like(weight)
    db = dout.sum(axis=(0, 2, 3))
    for di in range(k):
        for dj in range(k):
            rows = slice(di, di + stride * (oh - 1) + 1, stride)
            cols = slice(dj, dj + stride * (ow - 1) + 1, stride)
            patch = x[:, :, rows, cols]
            dw[:, :, di, dj] = np.einsum("noij,ncij->oc", dout, patch)
            dx[:, :, rows, cols] += np.einsum("noij,oc->ncij", dout, weight[:, :, di, dj])
    return dx, dw, db


# -- max pooling ------------------------------------------------------------


@njit
def maxpool_forward_nb(x, k, stride):
    n_batch, n_ch, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    out = np.empty((n_batch, n_ch, oh, ow))
    argmax = np.empty((n_batch, n_ch, oh, ow), dtype=np.int64)
    for n in range(n_batch):
        for c in range(n_ch):
            for i in range(oh):
                for j in range(ow):
                    best = x[n, c, i * stride, j * stride]
                    best_idx = 0
                    for di in range(k):
                        for dj in range(k):
                            v = x[n, c, i * stride + di, j * stride + dj]
                            if v > best:
                                best = v
                                best_idx = di * k + dj
                    out[n, c, i, j] = best
                    argmax[n, c, i, j] = best_idx
    return out, argmax


def maxpool_forward_np(x, k, stride):
    n_batch, n_ch, h, w = x.shape
    oh, ow = out_dims(h, w, k, stride)
    windows = np.empty((k * k, n_batch, n_ch, oh, ow))
    for di in range(k):
        for dj in range(k):
            windows[di * k + dj] = x[:, :, di:di + stride * (oh - 1) + 1:stride, dj:dj + stride * (ow - 1) + 1:stride]
    # np.argmax returns the first maximum, matching the strict ">" in the loop kernel
    argmax = np.argmax(windows, axis=0)
    out = np.take_along_axis(windows, argmax[None], axis=0)[0]
    return out, argmax.astype(np.int64)


@njit
def maxpool_backward_nb(dout, argmax, in_shape, k, stride):
    dx = np.zeros(in_shape)
    n_batch, n_ch, oh, ow = dout.shape
    for n in range(n_batch):
        for c in range(n_ch):
            for i in range(oh):
                for j in range(ow):
                    idx = argmax[n, c, i, j]
                    dx[n, c, i * stride + idx // k, j * stride + idx % k] += dout[n, c, i, j]
    return dx


def maxpool_backward_np(dout, argmax, in_shape, k, stride):
    dx = np.zeros(in_shape)
    _, _, oh, ow = dout.shape
    for di in range(k):
        for dj in range(k):
            mask = argmax == di * k + dj
            dx[:, :, di:di + stride * (oh - 1) + 1:stride, dj:dj + stride * (ow - 1) + 1:stride] += np.where(mask, dout, 0.0)
    return dx


# -- co-occurrence ----------------------------------------------------------


@njit
def cooccurrence_counts_nb(rq, t_trunc, order, axis):
    base = 2 * t_trunc + 1
    counts = np.zeros(base ** order, dtype=np.int64)
    h, w = rq.shape
    if axis == 1:
        for i in range(h):
            for j in range(w - order + 1):
                idx = 0
                for p in range(order):
                    idx = idx * base + (rq[i, j + p] + t_trunc)
                counts[idx] += 1
    else:
        for i in range(h - order + 1):
            for j in range(w):
                idx = 0
                for p in range(order):
                    idx = idx * base + (rq[i + p, j] + t_trunc)
                counts[idx] += 1
    return counts


def cooccurrence_counts_np(rq, t_trunc, order, axis):
    base = 2 * t_trunc + 1
    span = rq.shape[axis] - order + 1
    idx = np.zeros(np.take(rq, np.arange(span), axis=axis).shape, dtype=np.int64)
    for p in range(order):
        idx = idx * base + (np.take(rq, np.arange(p, p + span), axis=axis) + t_trunc)
    return np.bincount(idx.ravel(), minlength=base ** order).astype(np.int64)


if USE_NUMBA:
    conv2d_forward = conv2d_forward_nb
    conv2d_backward = conv2d_backward_nb
    maxpool_forward = maxpool_forward_nb
    maxpool_backward = maxpool_backward_nb
    cooccurrence_counts = cooccurrence_counts_nb
else:
    conv2d_forward = conv2d_forward_np
    conv2d_backward = conv2d_backward_np
    maxpool_forward = maxpool_forward_np
    maxpool_backward = maxpool_backward_np
    cooccurrence_counts = cooccurrence_counts_np
