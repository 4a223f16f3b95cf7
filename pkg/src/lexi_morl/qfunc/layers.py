"""Forward/backward primitives for the two fixed architectures (NHWC, float64)."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output size and (before, after) padding for TensorFlow-style 'same' convolution."""
    out = math.ceil(size / stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def conv_output_hw(h: int, w: int, kernel: int, stride: int) -> tuple[int, int]:
    return same_padding(h, kernel, stride)[0], same_padding(w, kernel, stride)[0]


def conv2d_forward(x, weight, bias, stride):
    """x [B,H,W,C], weight [k,k,C,F] -> ([B,Ho,Wo,F], cache)."""
    k = weight.shape[0]
    b, h, w, c = x.shape
    ho, pt, pb = same_padding(h, k, stride)
    wo, pl, pr = same_padding(w, k, stride)
    xp = np.zeros((b, h + pt + pb, w + pl + pr, c))
    xp[:, pt:pt + h, pl:pl + w] = x
    s0, s1, s2, s3 = xp.strides
    # [B, Ho, Wo, k, k, C] view; flattening gives columns ordered (ki, kj, c) like the weight
    win = as_strided(xp, (b, ho, wo, k, k, c), (s0, stride * s1, stride * s2, s1, s2, s3), writeable=False)
    cols = win.reshape(b * ho * wo, k * k * c)
    out = cols @ weight.reshape(k * k * c, -1) + bias
    return out.reshape(b, ho, wo, -1), (cols, xp.shape, (pt, pl), x.shape, stride)


def conv2d_backward(dout, weight, cache, input_grad=True):
    cols, xp_shape, (pt, pl), x_shape, stride = cache
    k = weight.shape[0]
    b, ho, wo, f = dout.shape
    d2 = dout.reshape(-1, f)
    dweight = (cols.T @ d2).reshape(weight.shape)
    dbias = d2.sum(axis=0)
    if not input_grad:
        return None, dweight, dbias
    dcols = (d2 @ weight.reshape(-1, f).T).reshape(b, ho, wo, k, k, xp_shape[3])
    dxp = np.zeros(xp_shape)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
    h, w = x_shape[1], x_shape[2]
    return dxp[:, pt:pt + h, pl:pl + w, :], dweight, dbias


def avgpool_forward(x, size=2):
    """Non-overlapping average pooling; edge windows average only their valid cells."""
    b, h, w, c = x.shape
    ho, wo = -(-h // size), -(-w // size)
    xp = np.zeros((b, ho * size, wo * size, c))
    xp[:, :h, :w] = x
    counts = np.zeros((ho * size, wo * size))
    counts[:h, :w] = 1.0
    n = counts.reshape(ho, size, wo, size).sum(axis=(1, 3))
    out = xp.reshape(b, ho, size, wo, size, c).sum(axis=(2, 4)) / n[None, :, :, None]
    return out, (x.shape, n, size)


def avgpool_backward(dout, cache):
    x_shape, n, size = cache
    b, h, w, c = x_shape
    g = dout / n[None, :, :, None]
    g = np.repeat(np.repeat(g, size, axis=1), size, axis=2)
    return g[:, :h, :w, :]


def pooled_hw(h: int, w: int, size: int = 2) -> tuple[int, int]:
    return -(-h // size), -(-w // size)


def relu(x):
    return np.maximum(x, 0.0)


def glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
