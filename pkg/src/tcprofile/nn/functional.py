"""Differentiable operations on :class:`Tensor`.

Each op computes its forward value with numpy and registers a backward closure
returning one gradient per parent (``None`` for parents that need none).
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import Tensor, as_tensor, make_child

GALE_KT = 34.0
KM_PER_INDEX = 5.0


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.number))


def add(a, b) -> Tensor:
    if _is_scalar(b):
        a, b = as_tensor(a), float(b)
        return make_child(a.data + b, (a,), lambda g: (g,))
    a, b = as_tensor(a), as_tensor(b)
    return make_child(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_child(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    if _is_scalar(b):
        a, b = as_tensor(a), float(b)
        return make_child(a.data * b, (a,), lambda g: (g * b,))
    a, b = as_tensor(a), as_tensor(b)
    return make_child(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def square(a) -> Tensor:
    a = as_tensor(a)
    return make_child(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_child(np.asarray(out), (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum_(a, axis), 1.0 / float(n))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_child(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def flatten(a) -> Tensor:
    return reshape(a, (a.shape[0], -1))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_child(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` shaped (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_child(np.maximum(a.data, 0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_child(s, (a,), lambda g: (g * s * (1.0 - s),))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return make_child(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def conv2d(x, weight, bias=None, stride=(1, 1), circular: bool = True) -> Tensor:
    """2-D convolution with "same" padding, output size ceil(in / stride).

    ``weight`` is (out, in, k_angle, k_radius). The angle axis (H) wraps
    around when ``circular``; the radius axis (W) is zero padded.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    bias = None if bias is None else as_tensor(bias)
    b_n, c_n, h, w = x.shape
    o_n, c_w, kh, kw = weight.shape
    if c_w != c_n:
        raise ValueError(f"conv2d: input has {c_n} channels, kernel expects {c_w}")
    stride = tuple(stride)
    cols, (oh, ow) = kernels.im2col(x.data, (kh, kw), stride, circular)
    wmat = weight.data.reshape(o_n, -1).T
    out = (cols @ wmat).reshape(b_n, oh, ow, o_n).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o_n)
        gw = (cols.T @ g2).T.reshape(weight.shape) if weight.requires_grad else None
        gx = kernels.col2im(g2 @ wmat.T, x.shape, (kh, kw), stride, circular) if x.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_child(out, parents, backward)


def batch_norm(x, gamma, beta, running_mean, running_var, training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalisation over every axis except 1 (features / channels).

    In training mode batch statistics are used and the running buffers are
    updated in place; otherwise the running buffers normalise.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    if training:
        if x.shape[0] < 2:
            raise ValueError("training-mode batch_norm needs a batch of at least 2 samples")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        n = x.data.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / max(n - 1, 1)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = (xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)).astype(x.dtype, copy=False)

    def backward(g):
        gg = g.sum(axis=axes)
        gxhat_sum = (g * xhat).sum(axis=axes)
        dgamma = gxhat_sum
        dbeta = gg
        scale = (gamma.data * inv).reshape(bshape)
        if training:
            n = x.data.size // x.shape[1]
            dx = scale / n * (n * g - gg.reshape(bshape) - xhat * gxhat_sum.reshape(bshape))
        else:
            dx = g * scale
        return dx, dgamma, dbeta

    return make_child(out, (x, gamma, beta), backward)


# --------------------------------------------------------- profile transforms


def infer_vmax(profile) -> Tensor:
    """Row-wise maximum of (B, N) profiles; ties route gradient to the lowest index."""
    p = as_tensor(profile)
    data = p.data if p.ndim == 2 else p.data[None]
    idx = np.argmax(data, axis=1)
    rows = np.arange(data.shape[0])
    out = data[rows, idx]

    def backward(g):
        gp = np.zeros_like(data)
        gp[rows, idx] = g.reshape(-1)
        return (gp.reshape(p.shape),)

    return make_child(out if p.ndim == 2 else out.reshape(()), (p,), backward)


def infer_r34(profile: np.ndarray, threshold: float = GALE_KT) -> np.ndarray:
    """Largest index whose wind reaches ``threshold``, times 5 km; 0 if none.

    Not differentiable; works on plain arrays of shape (N,) or (B, N).
    """
    p = np.asarray(profile.data if isinstance(profile, Tensor) else profile)
    hit = p >= threshold
    n = p.shape[-1]
    last = n - 1 - np.argmax(hit[..., ::-1], axis=-1)
    return np.where(hit.any(axis=-1), last * KM_PER_INDEX, 0.0)


def soft_r34(profile, tau: float = 1.0, threshold: float = GALE_KT) -> Tensor:
    """Smooth size estimate ``5 * sum_i sigmoid((p_i - 34) / tau)`` per row."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    p = as_tensor(profile)
    s = sigmoid(mul(add(p, -threshold), 1.0 / tau))
    return mul(sum_(s, axis=-1), KM_PER_INDEX)
