"""Model checkpoints in the shared manifest + blob container."""
from __future__ import annotations

from ..dataset.container import read_container, write_container
from .net import NetConfig, ProfilerNet

KIND = "tcprofile-checkpoint"


def save_checkpoint(net: ProfilerNet, path, extra: dict | None = None):
    meta = {"net_config": net.config.to_dict(), "extra": extra or {}}
    return write_container(path, KIND, meta, net.state_dict())


def load_checkpoint(path) -> tuple[ProfilerNet, dict]:
    """Rebuild the network stored at ``path``; returns ``(net, extra)``."""
    meta, arrays = read_container(path, KIND)
    net = ProfilerNet(NetConfig.from_dict(meta["net_config"]))
    net.load_state_dict(arrays)
    net.eval()
    return net, meta.get("extra", {})
