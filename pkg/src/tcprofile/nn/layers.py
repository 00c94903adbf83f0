"""Parameterised layers built on :mod:`tcprofile.nn.functional`."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor


def _param(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    training = True

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def train(self, mode: bool = True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride, rng, circular=True, dtype=np.float32):
        kh, kw = kernel
        fan_in = in_ch * kh * kw
        self.weight = _param(he_uniform(rng, (out_ch, in_ch, kh, kw), fan_in, dtype), "weight")
        self.bias = _param(np.zeros(out_ch, dtype=dtype), "bias")
        self.stride = tuple(stride)
        self.circular = circular

    def __call__(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.circular)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        self.weight = _param(he_uniform(rng, (n_in, n_out), n_in, dtype), "weight")
        self.bias = _param(np.zeros(n_out, dtype=dtype), "bias")

    def __call__(self, x):
        return F.linear(x, self.weight, self.bias)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class BatchNorm(Module):
    def __init__(self, n, dtype=np.float32, momentum=0.1, eps=1e-5):
        self.gamma = _param(np.ones(n, dtype=dtype), "gamma")
        self.beta = _param(np.zeros(n, dtype=dtype), "beta")
        self.running_mean = np.zeros(n, dtype=dtype)
        self.running_var = np.ones(n, dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.n_updates = np.zeros(1, dtype=np.int64)

    def __call__(self, x):
        # Cumulative average for the first 1/momentum batches, then the usual
        # EMA, so running statistics carry no bias from their initial values.
        momentum = self.momentum
        if self.training:
            momentum = max(momentum, 1.0 / float(self.n_updates[0] + 1))
        out = F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.training, momentum, self.eps)
        if self.training:
            self.n_updates += 1
        return out

    def reset_running_stats(self):
        self.running_mean[...] = 0.0
        self.running_var[...] = 1.0
        self.n_updates[...] = 0

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var, "n_updates": self.n_updates}
