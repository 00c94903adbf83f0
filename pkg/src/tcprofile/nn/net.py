"""The profiler CNN: polar sector convolutions to a 151-point wind profile."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from ..kernels import same_padding
from .layers import BatchNorm, Conv2d, Linear, Module
from .tensor import Tensor

CONV_DIMS = (16, 32, 64, 128, 256, 512)
HIDDEN_DIMS = (256, 64)
AUX_DIM = 10
PROFILE_LEN = 151


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 2
    input_hw: tuple[int, int] = (180, 103)
    kernel: tuple[int, int] = (4, 3)
    stride: tuple[int, int] = (2, 2)
    conv_dims: tuple[int, ...] = CONV_DIMS
    hidden_dims: tuple[int, ...] = HIDDEN_DIMS
    aux_dim: int = AUX_DIM
    out_dim: int = PROFILE_LEN
    circular: bool = True
    dtype: str = "float32"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        for key in ("input_hw", "kernel", "stride", "conv_dims", "hidden_dims"):
            d[key] = tuple(d[key])
        return cls(**d)

    def spatial_chain(self) -> list[tuple[int, int]]:
        h, w = self.input_hw
        chain = [(h, w)]
        for _ in self.conv_dims:
            h = same_padding(h, self.kernel[0], self.stride[0])[0]
            w = same_padding(w, self.kernel[1], self.stride[1])[0]
            chain.append((h, w))
        return chain


class ProfilerNet(Module):
    """Input BN, six strided conv+BN+relu blocks, aux concat, three linear layers.

    The last linear layer's output is mapped to knots with fixed buffers:
    ``profile = raw * out_scale + out_offset`` (set from training labels by
    :meth:`set_output_scaling`; identity by default).
    """

    def __init__(self, config: NetConfig = NetConfig(), seed: int = 0):
        self.config = config
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(seed)
        self.bn_in = BatchNorm(config.in_channels, dtype)
        self.convs: list[tuple[Conv2d, BatchNorm]] = []
        ch = config.in_channels
        for dim in config.conv_dims:
            self.convs.append((Conv2d(ch, dim, config.kernel, config.stride, rng, config.circular, dtype), BatchNorm(dim, dtype)))
            ch = dim
        h, w = config.spatial_chain()[-1]
        n = ch * h * w + config.aux_dim
        self.hidden: list[tuple[Linear, BatchNorm]] = []
        for dim in config.hidden_dims:
            self.hidden.append((Linear(n, dim, rng, dtype), BatchNorm(dim, dtype)))
            n = dim
        self.head = Linear(n, config.out_dim, rng, dtype)
        self.out_offset = np.zeros(config.out_dim, dtype=dtype)
        self.out_scale = np.ones(1, dtype=dtype)

    # -- structure ---------------------------------------------------------
    def _modules(self):
        yield "bn_in", self.bn_in
        for k, (conv, bn) in enumerate(self.convs):
            yield f"conv{k}", conv
            yield f"conv{k}.bn", bn
        for k, (lin, bn) in enumerate(self.hidden):
            yield f"fc{k}", lin
            yield f"fc{k}.bn", bn
        yield "head", self.head

    def parameters(self) -> dict[str, Tensor]:
        return {f"{m}.{p}": t for m, mod in self._modules() for p, t in mod.parameters().items()}

    def buffers(self) -> dict[str, np.ndarray]:
        out = {f"{m}.{b}": arr for m, mod in self._modules() for b, arr in mod.buffers().items()}
        out["out_offset"] = self.out_offset
        out["out_scale"] = self.out_scale
        return out

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.parameters().values()))

    def train(self, mode: bool = True):
        self.training = mode
        for _, mod in self._modules():
            mod.train(mode)
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: t.data.copy() for k, t in self.parameters().items()}
        state.update({k: v.copy() for k, v in self.buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params, bufs = self.parameters(), self.buffers()
        missing = (set(params) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for k, t in params.items():
            if state[k].shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {t.data.shape}")
            t.data = np.array(state[k], dtype=t.data.dtype)
        for k, arr in bufs.items():
            arr[...] = state[k]

    def set_output_scaling(self, offset: np.ndarray, scale: float):
        self.out_offset[...] = offset
        self.out_scale[...] = scale

    # -- forward -----------------------------------------------------------
    def __call__(self, images, aux) -> Tensor:
        dtype = np.dtype(self.config.dtype)
        x = Tensor(np.asarray(images, dtype=dtype)) if not isinstance(images, Tensor) else images
        a = Tensor(np.asarray(aux, dtype=dtype)) if not isinstance(aux, Tensor) else aux
        if x.ndim != 4 or x.shape[1:] != (self.config.in_channels, *self.config.input_hw):
            raise ValueError(f"expected input (B, {self.config.in_channels}, {self.config.input_hw}), got {x.shape}")
        h = self.bn_in(x)
        for conv, bn in self.convs:
            h = F.relu(bn(conv(h)))
        h = F.concat([F.flatten(h), a], axis=1)
        for lin, bn in self.hidden:
            h = F.relu(bn(lin(h)))
        raw = self.head(h)
        return F.add(F.mul(raw, Tensor(self.out_scale)), Tensor(self.out_offset))

    def predict(self, images, aux) -> np.ndarray:
        """Inference-mode forward pass returning plain arrays."""
        was = self.training
        self.eval()
        try:
            return self(images, aux).data
        finally:
            self.train(was)
