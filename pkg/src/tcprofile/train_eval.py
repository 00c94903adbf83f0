"""Training with rotation augmentation, epoch selection, rotation-blended evaluation, sweeps."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .nn import functional as F
from .nn.checkpoint import save_checkpoint
from .nn.layers import BatchNorm
from .nn.losses import LossWeights, composite_loss
from .nn.net import NetConfig, ProfilerNet
from .nn.optim import Adam
from .polar_geom import N_ANGLES

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    kernel: tuple[int, int] = (4, 3)
    alpha: float = 0.3
    beta: float = 0.0
    tau: float = 1.0
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    blend: int = 10
    blend_stat: str = "mean"
    coordinate: str = "polar"
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.blend < 1 or N_ANGLES % self.blend:
            raise ValueError(f"blend count must divide {N_ANGLES}")
        if self.blend_stat not in ("mean", "median"):
            raise ValueError("blend_stat must be 'mean' or 'median'")
        if self.coordinate not in ("polar", "cartesian"):
            raise ValueError("coordinate must be 'polar' or 'cartesian'")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch normalisation")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.tau)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "kernel" in d:
            d["kernel"] = tuple(d["kernel"])
        return cls(**d)


@dataclass
class EvalReport:
    profile_rmse: float
    vmax_rmse: float
    r34_rmse: float
    selected_epoch: int = -1
    curve: list[dict] = field(default_factory=list)
    n_profile: int = 0
    n_vmax: int = 0
    n_r34: int = 0


@dataclass
class Batch:
    """Array view of a record list."""

    images: np.ndarray
    aux: np.ndarray
    profiles: np.ndarray
    profile_mask: np.ndarray
    vmax: np.ndarray
    r34: np.ndarray
    r34_mask: np.ndarray

    def __len__(self):
        return len(self.vmax)

    def take(self, idx) -> "Batch":
        return Batch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def to_batch(records, coordinate: str = "polar") -> Batch:
    attr = "polar_image" if coordinate == "polar" else "cartesian_image"
    imgs = [getattr(r, attr) for r in records]
    if any(im is None for im in imgs):
        raise ValueError(f"records lack {attr}")
    return Batch(
        images=np.stack(imgs).astype(np.float32),
        aux=np.stack([r.aux for r in records]).astype(np.float32),
        profiles=np.stack([r.profile.speeds for r in records]).astype(np.float64),
        profile_mask=np.array([r.profile.valid for r in records], dtype=bool),
        vmax=np.array([r.params.vmax for r in records], dtype=np.float64),
        r34=np.array([np.nan if r.params.r34 is None else r.params.r34 for r in records]),
        r34_mask=np.array([r.params.r34 is not None for r in records], dtype=bool),
    )


def net_config_for(cfg: TrainConfig, image_shape: tuple[int, ...]) -> NetConfig:
    return NetConfig(
        in_channels=image_shape[0],
        input_hw=tuple(image_shape[1:]),
        kernel=tuple(cfg.kernel),
        circular=cfg.coordinate == "polar",
        dtype=cfg.dtype,
    )


# ---------------------------------------------------------------- inference


def roll_shifts(n_blend: int, n_angles: int = N_ANGLES) -> np.ndarray:
    return (n_angles // n_blend) * np.arange(n_blend)


def _combine(stack: np.ndarray, stat: str) -> np.ndarray:
    # Sorting along the roll axis makes the reduction independent of roll order.
    s = np.sort(stack, axis=1)
    if stat == "median":
        return np.median(s, axis=1)
    return s.sum(axis=1) / s.shape[1]


def blend_predict(model, images, aux, n_blend: int = 10, stat: str = "mean", chunk: int = 64) -> np.ndarray:
    """Mean (or median) profile over ``n_blend`` evenly spaced angular rolls.

    ``model`` is any callable ``predict(images, aux) -> (B, 151)``; polar
    inputs are (B, C, 180, R). Returns (B, 151).
    """
    images = np.asarray(images)
    aux = np.asarray(aux)
    predict = model.predict if hasattr(model, "predict") else model
    shifts = roll_shifts(n_blend, images.shape[2])
    per_chunk = max(1, chunk // n_blend)
    out = []
    for s in range(0, len(images), per_chunk):
        imgs = images[s : s + per_chunk]
        rolled = np.stack([np.roll(imgs, int(k), axis=2) for k in shifts], axis=1)
        flat = rolled.reshape(-1, *imgs.shape[1:])
        a = np.repeat(aux[s : s + per_chunk], n_blend, axis=0)
        pred = np.asarray(predict(flat, a), dtype=np.float64).reshape(len(imgs), n_blend, -1)
        out.append(_combine(pred, stat))
    return np.concatenate(out) if out else np.zeros((0, 151))


def predict_profiles(model, batch: Batch, cfg: TrainConfig) -> np.ndarray:
    if cfg.coordinate == "polar":
        return blend_predict(model, batch.images, batch.aux, cfg.blend, cfg.blend_stat)
    # No exact rotation on the square grid beyond quarter turns; predict once.
    predict = model.predict if hasattr(model, "predict") else model
    return np.concatenate(
        [np.asarray(predict(batch.images[s : s + 64], batch.aux[s : s + 64]), dtype=np.float64) for s in range(0, len(batch), 64)]
    )


def _rmse(err: np.ndarray) -> float:
    return float(np.sqrt(np.mean(err**2))) if err.size else float("nan")


def metrics(pred: np.ndarray, batch: Batch) -> EvalReport:
    """RMSEs of profiles (valid labels only), Vmax (all), R34 (labelled only)."""
    pm, rm = batch.profile_mask, batch.r34_mask
    prof_err = (pred[pm] - batch.profiles[pm]).ravel()
    vmax_err = F.infer_vmax(pred).data - batch.vmax
    r34_err = F.infer_r34(pred[rm]) - batch.r34[rm]
    return EvalReport(
        profile_rmse=_rmse(prof_err),
        vmax_rmse=_rmse(vmax_err),
        r34_rmse=_rmse(r34_err),
        n_profile=int(pm.sum()),
        n_vmax=len(batch),
        n_r34=int(rm.sum()),
    )


def evaluate(model, records_or_batch, cfg: TrainConfig = TrainConfig()) -> EvalReport:
    batch = records_or_batch if isinstance(records_or_batch, Batch) else to_batch(records_or_batch, cfg.coordinate)
    return metrics(predict_profiles(model, batch, cfg), batch)


def mean_profile(batch: Batch) -> np.ndarray:
    return batch.profiles[batch.profile_mask].mean(axis=0)


def baseline_report(train: Batch, target: Batch) -> EvalReport:
    """Metrics of the constant predictor that always outputs the training mean profile."""
    pred = np.broadcast_to(mean_profile(train), (len(target), train.profiles.shape[1]))
    return metrics(np.array(pred), target)


# ----------------------------------------------------------------- training


@dataclass
class TrainResult:
    net: ProfilerNet
    report: EvalReport
    best_state: dict
    config: TrainConfig


def _augment(images: np.ndarray, rng: np.random.Generator, coordinate: str) -> np.ndarray:
    out = np.empty_like(images)
    if coordinate == "polar":
        shifts = rng.integers(0, images.shape[2], size=len(images))
        for k, s in enumerate(shifts):
            out[k] = np.roll(images[k], int(s), axis=1)
    else:
        turns = rng.integers(0, 4, size=len(images))
        for k, t in enumerate(turns):
            out[k] = np.rot90(images[k], int(t), axes=(1, 2))
    return out


def _batches(n: int, size: int, rng: np.random.Generator | None) -> list[np.ndarray]:
    perm = np.arange(n) if rng is None else rng.permutation(n)
    chunks = [perm[s : s + size] for s in range(0, n, size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def recalibrate_batchnorm(net: ProfilerNet, images: np.ndarray, aux: np.ndarray, batch_size: int = 32):
    """Recompute every batchnorm's running statistics under the current weights.

    The statistics become the exact average of per-batch statistics over the
    given inputs, in order; the net is left in eval mode.
    """
    bns = [m for _, m in net._modules() if isinstance(m, BatchNorm)]
    saved = [m.momentum for m in bns]
    for m in bns:
        m.reset_running_stats()
        m.momentum = 0.0
    net.train()
    try:
        for idx in _batches(len(images), batch_size, None):
            net(images[idx], aux[idx])
    finally:
        for m, mom in zip(bns, saved):
            m.momentum = mom
        net.eval()


def train(cfg: TrainConfig, train_records, val_records, checkpoint_dir=None) -> TrainResult:
    """Train a profiler and keep the epoch with the lowest validation profile RMSE.

    Each training image is rolled by a fresh random multiple of 2 degrees every
    epoch. With ``checkpoint_dir`` every epoch's weights are written to
    ``epoch_NNN`` and the selected one to ``best``.
    """
    tr = train_records if isinstance(train_records, Batch) else to_batch(train_records, cfg.coordinate)
    va = val_records if isinstance(val_records, Batch) else to_batch(val_records, cfg.coordinate)
    if len(tr) < 2 or len(va) == 0:
        raise ValueError("need at least 2 training and 1 validation sample")
    if not tr.profile_mask.any():
        raise ValueError("training set has no valid profile labels")
    rng = np.random.default_rng([cfg.seed, 1])
    net = ProfilerNet(net_config_for(cfg, tr.images.shape[1:]), seed=cfg.seed)
    labels = tr.profiles[tr.profile_mask]
    net.set_output_scaling(labels.mean(axis=0), float(labels.std()))
    opt = Adam(net.parameters(), lr=cfg.lr)
    weights = cfg.weights

    curve: list[dict] = []
    best_state, best_score, best_epoch = None, math.inf, -1
    for epoch in range(1, cfg.epochs + 1):
        net.train()
        losses = []
        for idx in _batches(len(tr), cfg.batch_size, rng):
            b = tr.take(idx)
            if not b.profile_mask.any() and weights.alpha == 0 and not (weights.beta > 0 and b.r34_mask.any()):
                continue
            opt.zero_grad()
            pred = net(_augment(b.images, rng, cfg.coordinate), b.aux)
            loss, _ = composite_loss(pred, b.profiles, b.profile_mask, b.vmax, b.r34, b.r34_mask, weights)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(value)
        # Running statistics lag weights that moved during the epoch.
        recalibrate_batchnorm(net, tr.images, tr.aux, cfg.batch_size)
        rep = evaluate(net, va, cfg)
        curve.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)) if losses else float("nan"),
                "profile_rmse": rep.profile_rmse,
                "vmax_rmse": rep.vmax_rmse,
                "r34_rmse": rep.r34_rmse,
            }
        )
        score = rep.profile_rmse if math.isfinite(rep.profile_rmse) else rep.vmax_rmse
        log.info("epoch %d loss %.3f val profile %.3f vmax %.3f r34 %.2f", epoch, curve[-1]["train_loss"], rep.profile_rmse, rep.vmax_rmse, rep.r34_rmse)
        if checkpoint_dir is not None:
            save_checkpoint(net, Path(checkpoint_dir) / f"epoch_{epoch:03d}", {"epoch": epoch, "train_config": cfg.to_dict()})
        if score < best_score:
            best_score, best_epoch, best_state = score, epoch, net.state_dict()
    net.load_state_dict(best_state)
    net.eval()
    sel = curve[best_epoch - 1]
    report = EvalReport(
        profile_rmse=sel["profile_rmse"],
        vmax_rmse=sel["vmax_rmse"],
        r34_rmse=sel["r34_rmse"],
        selected_epoch=best_epoch,
        curve=curve,
        n_profile=int(va.profile_mask.sum()),
        n_vmax=len(va),
        n_r34=int(va.r34_mask.sum()),
    )
    if checkpoint_dir is not None:
        save_checkpoint(net, Path(checkpoint_dir) / "best", {"epoch": best_epoch, "train_config": cfg.to_dict()})
    return TrainResult(net=net, report=report, best_state=best_state, config=cfg)


# ------------------------------------------------------------------- sweeps

SWEEP_COLUMNS = (
    "Coordinate",
    "(angle, radial)",
    "Loss",
    "α",
    "β",
    "Profile RMSE (knots)",
    "V_max RMSE (knots)",
    "R_34 RMSE (km)",
    "Selected Epoch",
)


def loss_name(alpha: float, beta: float) -> str:
    parts = ["Profile"]
    if alpha > 0:
        parts.append("V_max")
    if beta > 0:
        parts.append("R_34")
    return "+".join(parts)


def sweep_grid(kernels=((4, 3),), loss_weights=((0.3, 0.0),), coordinates=("polar",), base: TrainConfig = TrainConfig()):
    """Cartesian product of kernel shapes, (alpha, beta) pairs and coordinate systems."""
    return [
        replace(base, kernel=tuple(k), alpha=float(a), beta=float(b), coordinate=c)
        for c in coordinates
        for k in kernels
        for a, b in loss_weights
    ]


def run_sweep(configs, train_records, val_records) -> list[dict]:
    """Train one model per config; rows are sorted by (coordinate, kernel, alpha, beta)."""
    rows = []
    for cfg in configs:
        rep = train(cfg, train_records, val_records).report
        rows.append(sweep_row(cfg, rep))
    rows.sort(key=lambda r: (r["Coordinate"], r["(angle, radial)"], r["α"], r["β"]))
    return rows


def sweep_row(cfg: TrainConfig, rep: EvalReport) -> dict:
    return {
        "Coordinate": "Cartesian" if cfg.coordinate == "cartesian" else "Polar",
        "(angle, radial)": f"({cfg.kernel[0]}, {cfg.kernel[1]})",
        "Loss": loss_name(cfg.alpha, cfg.beta),
        "α": cfg.alpha,
        "β": cfg.beta,
        "Profile RMSE (knots)": round(rep.profile_rmse, 4),
        "V_max RMSE (knots)": round(rep.vmax_rmse, 4),
        "R_34 RMSE (km)": round(rep.r34_rmse, 4),
        "Selected Epoch": rep.selected_epoch,
    }


def format_sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def parse_sweep_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
        raise ValueError(f"unexpected sweep columns {reader.fieldnames}")
    rows = []
    for r in reader:
        row = dict(r)
        for k in ("α", "β", "Profile RMSE (knots)", "V_max RMSE (knots)", "R_34 RMSE (km)"):
            row[k] = float(row[k])
        row["Selected Epoch"] = int(row["Selected Epoch"])
        rows.append(row)
    return rows
