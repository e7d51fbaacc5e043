"""Functional layer primitives with explicit backward passes.

Convolutions use im2col + matmul; the backward input gradient is scattered
back with one vectorized add per kernel tap.  Padding follows the usual
"same" rule (output extent = ceil(extent / stride), extra padding on the
trailing side).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _same_pads(extent: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-extent // stride)
    total = max((out - 1) * stride + kernel - extent, 0)
    lead = total // 2
    return lead, total - lead


def conv2d_forward(x, w, b, stride=1):
    n, h, wd, cin = x.shape
    kh, kw, cin_w, cout = w.shape
    if cin != cin_w:
        raise ValueError(f"conv2d: input has {cin} channels, kernel expects {cin_w}")
    (pt, pb), (pl, pr) = _same_pads(h, kh, stride), _same_pads(wd, kw, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    patches = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(
        n * ho * wo, kh * kw * cin
    )
    y = patches @ w.reshape(-1, cout) + b
    cache = (patches, x.shape, xp.shape, (pt, pl), w, stride, (ho, wo))
    return y.reshape(n, ho, wo, cout), cache


def conv2d_backward(dy, cache):
    patches, x_shape, xp_shape, (pt, pl), w, stride, (ho, wo) = cache
    n, h, wd, cin = x_shape
    kh, kw, _, cout = w.shape
    dyf = dy.reshape(-1, cout)
    dw = (patches.T @ dyf).reshape(w.shape)
    db = dyf.sum(axis=0)
    dcols = (dyf @ w.reshape(-1, cout).T).reshape(n, ho, wo, kh, kw, cin)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, i, j, :]
    dx = dxp[:, pt:pt + h, pl:pl + wd, :]
    return dx, dw, db


def conv3d_forward(x, w, b, stride=1):
    n, t, h, wd, cin = x.shape
    kt, kh, kw, cin_w, cout = w.shape
    if cin != cin_w:
        raise ValueError(f"conv3d: input has {cin} channels, kernel expects {cin_w}")
    pads = [_same_pads(e, k, stride) for e, k in ((t, kt), (h, kh), (wd, kw))]
    xp = np.pad(x, ((0, 0), pads[0], pads[1], pads[2], (0, 0)))
    win = sliding_window_view(xp, (kt, kh, kw), axis=(1, 2, 3))
    win = win[:, ::stride, ::stride, ::stride]
    to, ho, wo = win.shape[1:4]
    patches = np.ascontiguousarray(win.transpose(0, 1, 2, 3, 5, 6, 7, 4)).reshape(
        n * to * ho * wo, kt * kh * kw * cin
    )
    y = patches @ w.reshape(-1, cout) + b
    cache = (patches, x.shape, xp.shape, tuple(p[0] for p in pads), w, stride,
             (to, ho, wo))
    return y.reshape(n, to, ho, wo, cout), cache


def conv3d_backward(dy, cache):
    patches, x_shape, xp_shape, lead, w, stride, (to, ho, wo) = cache
    n, t, h, wd, cin = x_shape
    kt, kh, kw, _, cout = w.shape
    dyf = dy.reshape(-1, cout)
    dw = (patches.T @ dyf).reshape(w.shape)
    db = dyf.sum(axis=0)
    dcols = (dyf @ w.reshape(-1, cout).T).reshape(n, to, ho, wo, kt, kh, kw, cin)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for a in range(kt):
        for i in range(kh):
            for j in range(kw):
                dxp[:, a:a + stride * to:stride, i:i + stride * ho:stride,
                    j:j + stride * wo:stride] += dcols[:, :, :, :, a, i, j, :]
    pt, ph, pw = lead
    dx = dxp[:, pt:pt + t, ph:ph + h, pw:pw + wd, :]
    return dx, dw, db


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def avgpool2d_forward(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2d needs even spatial extents, got {h}×{w}")
    y = x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))
    return y, x.shape


def avgpool2d_backward(dy, x_shape):
    return np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) * 0.25


def avgpool3d_forward(x):
    n, t, h, w, c = x.shape
    if t % 2 or h % 2 or w % 2:
        raise ValueError(f"avgpool3d needs even extents, got {t}×{h}×{w}")
    y = x.reshape(n, t // 2, 2, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4, 6))
    return y, x.shape


def avgpool3d_backward(dy, x_shape):
    up = np.repeat(np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2), 2, axis=3)
    return up * 0.125


def upsample2d_forward(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2), x.shape


def upsample2d_backward(dy, x_shape):
    n, h, w, c = x_shape
    return dy.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))


def gap_forward(x):
    """Global average pool over every axis between batch and channels."""
    axes = tuple(range(1, x.ndim - 1))
    count = int(np.prod([x.shape[a] for a in axes]))
    return x.mean(axis=axes), (x.shape, count)


def gap_backward(dy, cache):
    x_shape, count = cache
    expand = dy.reshape((dy.shape[0],) + (1,) * (len(x_shape) - 2) + (dy.shape[-1],))
    return np.broadcast_to(expand / count, x_shape).copy()


def dense_forward(x, w, b):
    return x @ w + b, x


def dense_backward(dy, x, w):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def uniform_target_cross_entropy(logits):
    """Mean cross-entropy against the uniform distribution (ascent-free
    alternative objective for identity removal)."""
    n, k = logits.shape
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z.mean(axis=1)))
    grad = (softmax(logits) - 1.0 / k) / n
    return loss, grad


def l1_loss(pred, target):
    diff = pred - target
    loss = float(np.mean(np.abs(diff)))
    return loss, np.sign(diff) / diff.size


def mse_loss(pred, target):
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size
