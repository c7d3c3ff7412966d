"""Click-guided multi-scale token selection and fusion.

The user's positive clicks pick out base tokens whose mean acts as a
reference query. Auxiliary token streams (finer and coarser patch
sizes) are scored against that query with a sigmoid-cosine similarity,
the best twelfth of each stream is kept through a differentiable top-k
(a score-valued one-hot matrix, so gradients reach both the tokens and
the scores), and the winning scale is cross-attended into the base
stream. Both auxiliary streams are then refreshed from the base grid
via pooled cross attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clicks import ClickState
from .config import ModelConfig
from .modules import Module, param
from .resample import avgpool_matrix
from .tensor import (
    ContractError,
    Tensor,
    add,
    cosine_rows,
    gather_rows,
    matmul,
    mean_axis,
    mul,
    reshape,
    sigmoid,
    softmax_rows,
    transpose,
)

TINY = "tiny"
LARGE = "large"


@dataclass
class ScaleSelection:
    """Top-k outcome for one auxiliary token stream."""

    scale: str
    patch: int
    scores: Tensor          # [L_j], full similarity scores
    topk_scores: Tensor     # [k]
    indices: np.ndarray     # [k] int64, descending score order
    matrix: Tensor          # [k, L_j] score-valued one-hot rows
    tokens: Tensor          # [k, C] selected tokens, scaled by their score
    mean_score: float


@dataclass
class FusionRecord:
    """Everything one fusion block decided, kept for losses and debugging."""

    block_index: int
    kernel: Tensor | None
    selections: dict[str, ScaleSelection]
    chosen: str | None

    @property
    def active(self) -> bool:
        return self.kernel is not None


def click_token_indices(clicks: ClickState, grid: int, patch_px: int) -> np.ndarray:
    """Distinct base-grid indices containing positive clicks (row-major)."""
    idx = []
    for c in clicks.clicks:
        if not c.positive:
            continue
        gx = min(int(c.x) // patch_px, grid - 1)
        gy = min(int(c.y) // patch_px, grid - 1)
        idx.append(gy * grid + gx)
    return np.unique(np.asarray(idx, dtype=np.int64))


def compute_kernel(f_b: Tensor, clicks: ClickState, grid: int, patch_px: int) -> Tensor | None:
    """Mean of the positively clicked base tokens, or None without clicks.

    Repeated clicks inside one patch are deduplicated so they do not
    reweight the mean.
    """
    idx = click_token_indices(clicks, grid, patch_px)
    if idx.size == 0:
        return None
    rows = gather_rows(f_b, idx)
    return mean_axis(rows, axis=0, keepdims=True)  # [1, C]


def similarity_scores(kernel: Tensor, f_j: Tensor) -> Tensor:
    """sigmoid(cos(kernel, token)) per row; range (sigmoid(-1), sigmoid(1))."""
    return sigmoid(cosine_rows(kernel, f_j))


def topk(scores: Tensor, k: int) -> tuple[Tensor, np.ndarray]:
    """k largest scores, descending; ties resolved toward the lower index."""
    L = scores.data.shape[0]
    if not (1 <= k <= L):
        raise ContractError(f"top-k count {k} outside [1, {L}]")
    order = np.argsort(-scores.data, kind="stable")[:k]
    return gather_rows(scores, order), order.astype(np.int64)


def build_selection(topk_scores: Tensor, indices: np.ndarray, length: int) -> Tensor:
    """[k, L] matrix with row i carrying score_i at column indices[i]."""
    k = topk_scores.data.shape[0]
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape != (k,):
        raise ContractError(f"expected {k} indices, got shape {idx.shape}")
    if np.unique(idx).size != k:
        raise ContractError("selection indices must be distinct")
    if idx.size and (idx.min() < 0 or idx.max() >= length):
        raise ContractError(f"selection index out of range for length {length}")
    onehot = np.zeros((k, length), dtype=topk_scores.data.dtype)
    onehot[np.arange(k), idx] = 1.0
    return mul(Tensor(onehot), reshape(topk_scores, (k, 1)))


def select(matrix: Tensor, f_j: Tensor) -> Tensor:
    """Gather-and-scale as a matrix product; differentiable on both sides."""
    return matmul(matrix, f_j)


def select_scale_tokens(kernel: Tensor, f_j: Tensor, scale: str, patch: int, k: int) -> ScaleSelection:
    scores = similarity_scores(kernel, f_j)
    top_scores, indices = topk(scores, k)
    matrix = build_selection(top_scores, indices, f_j.data.shape[0])
    tokens = select(matrix, f_j)
    return ScaleSelection(
        scale=scale,
        patch=patch,
        scores=scores,
        topk_scores=top_scores,
        indices=indices,
        matrix=matrix,
        tokens=tokens,
        mean_score=float(top_scores.data.mean()),
    )


def choose_scale(sel_t: ScaleSelection, sel_l: ScaleSelection, mode: str,
                 rng: np.random.Generator | None = None) -> str:
    """Pick the stream to fuse: argmax of mean top-k score at inference
    (ties favor the tiny scale); uniformly random while training."""
    if mode == "train":
        if rng is None:
            raise ContractError("training-mode scale choice needs an rng")
        return TINY if rng.random() < 0.5 else LARGE
    return TINY if sel_t.mean_score >= sel_l.mean_score else LARGE


class CrossAttentionFuse(Module):
    """Queries from base tokens, keys/values from the selected tokens.

    Value and output projections carry no bias so that an all-zero
    selection contributes exactly nothing to the residual stream.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        c = cfg.embed_dim
        self.heads = cfg.heads
        self.wq = param(rng, (c, c), dtype=dtype)
        self.wk = param(rng, (c, c), dtype=dtype)
        self.wv = param(rng, (c, c), dtype=dtype)
        self.wo = param(rng, (c, c), dtype=dtype)

    def attend(self, queries: Tensor, context: Tensor) -> Tensor:
        Lq, c = queries.data.shape
        Lk = context.data.shape[0]
        h = self.heads
        dh = c // h
        q = transpose(reshape(matmul(queries, self.wq), (Lq, h, dh)), (1, 0, 2))
        k = transpose(reshape(matmul(context, self.wk), (Lk, h, dh)), (1, 0, 2))
        v = transpose(reshape(matmul(context, self.wv), (Lk, h, dh)), (1, 0, 2))
        attn = softmax_rows(matmul(q, transpose(k, (0, 2, 1))), scale=1.0 / math.sqrt(dh))
        mixed = reshape(transpose(matmul(attn, v), (1, 0, 2)), (Lq, c))
        return matmul(mixed, self.wo)

    def __call__(self, f_b: Tensor, selected: Tensor) -> Tensor:
        if selected.data.shape[0] == 0:
            return f_b
        return add(f_b, self.attend(f_b, selected))


class ScaledCrossAttention(Module):
    """Cross attention whose keys/values come from a pooled base grid."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        c = cfg.embed_dim
        self.heads = cfg.heads
        self.ratio = cfg.pool_ratio
        self.dtype = dtype
        self.wq = param(rng, (c, c), dtype=dtype)
        self.wk = param(rng, (c, c), dtype=dtype)
        self.wv = param(rng, (c, c), dtype=dtype)
        self.wo = param(rng, (c, c), dtype=dtype)

    def pooled(self, f_b: Tensor, grid: int) -> Tensor:
        if grid * grid != f_b.data.shape[0]:
            raise ContractError(f"base tokens {f_b.data.shape[0]} do not form a {grid}x{grid} grid")
        if grid % self.ratio:
            raise ContractError(f"pool ratio {self.ratio} does not divide grid {grid}")
        if self.ratio == 1:
            return f_b
        return matmul(Tensor(avgpool_matrix(grid, self.ratio, dtype=self.dtype)), f_b)

    def __call__(self, f_j: Tensor, f_b: Tensor, grid: int) -> Tensor:
        context = self.pooled(f_b, grid)
        Lq, c = f_j.data.shape
        Lk = context.data.shape[0]
        h = self.heads
        dh = c // h
        q = transpose(reshape(matmul(f_j, self.wq), (Lq, h, dh)), (1, 0, 2))
        k = transpose(reshape(matmul(context, self.wk), (Lk, h, dh)), (1, 0, 2))
        v = transpose(reshape(matmul(context, self.wv), (Lk, h, dh)), (1, 0, 2))
        attn = softmax_rows(matmul(q, transpose(k, (0, 2, 1))), scale=1.0 / math.sqrt(dh))
        mixed = reshape(transpose(matmul(attn, v), (1, 0, 2)), (Lq, c))
        return add(f_j, matmul(mixed, self.wo))


class FusionBlock(Module):
    """One fusion step: score, select, choose a scale, fuse, refresh.

    Without any positive click there is no reference kernel and the
    block is the identity on all three streams.
    """

    def __init__(self, cfg: ModelConfig, block_index: int, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.block_index = block_index
        self.fuse = CrossAttentionFuse(cfg, rng, dtype=dtype)
        self.refresh = ScaledCrossAttention(cfg, rng, dtype=dtype)

    def __call__(self, f_b: Tensor, f_t: Tensor, f_l: Tensor, clicks: ClickState,
                 mode: str = "infer", rng: np.random.Generator | None = None,
                 ) -> tuple[Tensor, Tensor, Tensor, FusionRecord]:
        cfg = self.cfg
        grid = cfg.grid(cfg.base_patch)
        patch_px = cfg.base_patch
        kernel = compute_kernel(f_b, clicks, grid, patch_px)
        record = FusionRecord(self.block_index, kernel, {}, None)
        if kernel is None:
            return f_b, f_t, f_l, record

        p_t, p_l = cfg.aux_patch_sizes()
        sel_t = select_scale_tokens(kernel, f_t, TINY, p_t, cfg.topk_count(p_t))
        sel_l = select_scale_tokens(kernel, f_l, LARGE, p_l, cfg.topk_count(p_l))
        record.selections = {TINY: sel_t, LARGE: sel_l}
        record.chosen = choose_scale(sel_t, sel_l, mode, rng)

        chosen_tokens = record.selections[record.chosen].tokens
        f_b = self.fuse(f_b, chosen_tokens)
        f_t = self.refresh(f_t, f_b, grid)
        f_l = self.refresh(f_l, f_b, grid)
        return f_b, f_t, f_l, record
