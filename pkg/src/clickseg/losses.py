"""Segmentation and token-contrast losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multiscale import FusionRecord, ScaleSelection
from .tensor import (
    ContractError,
    Tensor,
    add,
    clamp_min,
    gather_rows,
    mul,
    pow_const,
    sigmoid,
    softplus,
    sub,
    sum_axis,
    tlog,
    tmean,
    tsqrt,
    tsum,
)

_LOG_FLOOR = 1e-12


def _check_binary(mask: np.ndarray, name: str):
    vals = np.unique(mask)
    if not np.isin(vals, (0, 1)).all():
        raise ContractError(f"{name} must be binary, found values {vals[:5]}")


def block_reduce_mean(mask: np.ndarray, factor: int) -> np.ndarray:
    h, w = mask.shape
    if h % factor or w % factor:
        raise ContractError(f"mask {h}x{w} not divisible by {factor}")
    return mask.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Area-threshold downsample: a cell is foreground above half coverage."""
    _check_binary(np.asarray(mask), "mask")
    return (block_reduce_mean(np.asarray(mask, dtype=np.float64), factor) > 0.5).astype(np.float32)


def rasterize_token_gt(mask: np.ndarray, patch: int) -> np.ndarray:
    """Token-level labels: positive iff more than half the patch is foreground."""
    _check_binary(np.asarray(mask), "mask")
    return (block_reduce_mean(np.asarray(mask, dtype=np.float64), patch) > 0.5).astype(np.float32).reshape(-1)


def focal_loss(logits: Tensor, gt: np.ndarray, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Mean of -alpha_t (1 - p_t)^gamma log(p_t) over pixels.

    ``gt`` is a binary array with the same spatial shape as ``logits``;
    ``alpha`` weights foreground, ``1 - alpha`` background.
    """
    gt = np.asarray(gt)
    _check_binary(gt, "gt")
    if gt.shape != logits.data.shape:
        raise ContractError(f"gt shape {gt.shape} != logits shape {logits.data.shape}")
    y = gt.astype(logits.data.dtype)
    p = sigmoid(logits)
    p_t = add(mul(p, Tensor(y)), mul(sub(Tensor(np.ones_like(y)), p), Tensor(1.0 - y)))
    alpha_t = Tensor((alpha * y + (1.0 - alpha) * (1.0 - y)).astype(logits.data.dtype))
    modulation = pow_const(sub(Tensor(np.ones_like(y)), p_t), gamma) if gamma != 0 else Tensor(np.ones_like(y))
    log_pt = tlog(clamp_min(p_t, _LOG_FLOOR))
    return -tmean(mul(alpha_t, mul(modulation, log_pt)))


@dataclass
class TripletReport:
    loss: Tensor
    pair_counts: dict[str, int] = field(default_factory=dict)
    positive_counts: dict[str, int] = field(default_factory=dict)


def _token_distances(kernel: Tensor, tokens: Tensor) -> Tensor:
    """Euclidean distance from the kernel to every selected token: [k]."""
    diff = sub(tokens, kernel)  # kernel broadcasts over rows
    return tsqrt(clamp_min(sum_axis(mul(diff, diff), axis=1), 0.0))


def triplet_token_loss(kernel: Tensor, selections: list[ScaleSelection], gt: np.ndarray,
                       rng: np.random.Generator | None = None, max_pairs: int = 256) -> TripletReport:
    """Softplus margin loss over (positive, negative) selected-token pairs.

    Per scale: tokens whose patch is mostly foreground form the positive
    set, the rest the negative set; every pair contributes
    log(1 + exp(d_pos - d_neg)) and the sum is divided by the number of
    pairs. Scales missing a side contribute zero. Pair enumeration is
    capped at ``max_pairs`` random pairs per scale to bound cost.
    """
    total: Tensor | None = None
    pair_counts: dict[str, int] = {}
    positive_counts: dict[str, int] = {}
    for sel in selections:
        labels = rasterize_token_gt(gt, sel.patch)[sel.indices]
        pos_idx = np.flatnonzero(labels > 0.5)
        neg_idx = np.flatnonzero(labels <= 0.5)
        positive_counts[sel.scale] = int(pos_idx.size)
        if pos_idx.size == 0 or neg_idx.size == 0:
            pair_counts[sel.scale] = 0
            continue
        pairs = np.stack(np.meshgrid(pos_idx, neg_idx, indexing="ij"), axis=-1).reshape(-1, 2)
        if pairs.shape[0] > max_pairs:
            if rng is None:
                rng = np.random.default_rng(0)
            pick = rng.choice(pairs.shape[0], size=max_pairs, replace=False)
            pairs = pairs[pick]
        n = pairs.shape[0]
        pair_counts[sel.scale] = int(n)
        d = _token_distances(kernel, sel.tokens)
        d_pos = gather_rows(d, pairs[:, 0])
        d_neg = gather_rows(d, pairs[:, 1])
        term = tsum(softplus(sub(d_pos, d_neg))) * (1.0 / n)
        total = term if total is None else add(total, term)
    if total is None:
        total = Tensor(np.asarray(0.0, dtype=kernel.data.dtype))
    return TripletReport(total, pair_counts, positive_counts)


def contrastive_loss_from_records(records: list[FusionRecord], gt: np.ndarray,
                                  rng: np.random.Generator | None = None,
                                  max_pairs: int = 256) -> TripletReport:
    """Sum the triplet loss over every active fusion block in a forward pass."""
    total: Tensor | None = None
    pair_counts: dict[str, int] = {}
    positive_counts: dict[str, int] = {}
    for rec in records:
        if not rec.active:
            continue
        rep = triplet_token_loss(rec.kernel, list(rec.selections.values()), gt, rng, max_pairs)
        total = rep.loss if total is None else add(total, rep.loss)
        for k, v in rep.pair_counts.items():
            pair_counts[k] = pair_counts.get(k, 0) + v
        for k, v in rep.positive_counts.items():
            positive_counts[k] = positive_counts.get(k, 0) + v
    if total is None:
        total = Tensor(np.asarray(0.0, dtype=np.float32))
    return TripletReport(total, pair_counts, positive_counts)


def total_loss(l_seg: Tensor, l_c: Tensor) -> Tensor:
    """Plain sum; the combined objective carries no extra weighting."""
    return add(l_seg, l_c)


@dataclass
class LossReport:
    seg: float
    contrast: float
    total: float
    pair_counts: dict[str, int]

    @classmethod
    def build(cls, l_seg: Tensor, l_c: Tensor, l: Tensor, pair_counts: dict[str, int]) -> "LossReport":
        return cls(float(l_seg.data), float(l_c.data), float(l.data), dict(pair_counts))
