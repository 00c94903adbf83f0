"""Composite training objective on predicted profiles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.3
    beta: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


class DegenerateLoss(ValueError):
    """No loss term has any labelled sample to act on."""


def composite_loss(pred: Tensor, profiles, profile_mask, vmax, r34, r34_mask, weights: LossWeights = LossWeights()):
    """Masked profile MSE + alpha * intensity MSE + beta * size MSE.

    ``pred`` is (B, 151). The profile term averages over points and over the
    samples flagged in ``profile_mask``; the intensity term uses every sample;
    the size term uses :func:`soft_r34` on samples flagged in ``r34_mask``.
    Returns ``(loss, parts)`` where ``parts`` holds the unweighted terms.
    """
    dtype = pred.dtype
    pmask = np.asarray(profile_mask, dtype=bool)
    rmask = np.asarray(r34_mask, dtype=bool)
    n_p, n_r = int(pmask.sum()), int(rmask.sum())
    use_v = weights.alpha > 0
    use_r = weights.beta > 0 and n_r > 0
    if n_p == 0 and not use_v and not use_r:
        raise DegenerateLoss("batch has no profile labels and alpha/beta leave nothing to optimise")

    parts: dict[str, float] = {}
    terms: list[Tensor] = []
    if n_p:
        labels = np.where(pmask[:, None], np.nan_to_num(np.asarray(profiles, dtype=dtype)), 0.0).astype(dtype)
        diff = F.mul(F.add(pred, Tensor(-labels)), Tensor(pmask[:, None].astype(dtype)))
        l_p = F.mul(F.sum_(F.square(diff)), 1.0 / (n_p * pred.shape[1]))
        terms.append(l_p)
        parts["profile"] = l_p.item()
    vdiff = F.add(F.infer_vmax(pred), Tensor(-np.asarray(vmax, dtype=dtype)))
    l_v = F.mul(F.sum_(F.square(vdiff)), 1.0 / pred.shape[0])
    parts["vmax"] = l_v.item()
    if use_v:
        terms.append(F.mul(l_v, weights.alpha))
    if n_r:
        lab = np.where(rmask, np.nan_to_num(np.asarray(r34, dtype=dtype)), 0.0).astype(dtype)
        rdiff = F.mul(F.add(F.soft_r34(pred, weights.tau), Tensor(-lab)), Tensor(rmask.astype(dtype)))
        l_r = F.mul(F.sum_(F.square(rdiff)), 1.0 / n_r)
        parts["r34"] = l_r.item()
        if use_r:
            terms.append(F.mul(l_r, weights.beta))
    total = terms[0]
    for t in terms[1:]:
        total = F.add(total, t)
    return total, parts
