"""ViT-style image encoder with shared multi-scale patch embedding.

A single 6-channel patch kernel (RGB + positive/negative click maps +
previous mask) is learned at the base 16 px patch size and resampled to
the other configured patch sizes, so all token streams share one
embedding. Position embeddings live on the base grid and are resampled
the same way.
"""

from __future__ import annotations

import math

import numpy as np

from .config import ConfigError, ModelConfig
from .modules import Module, ones_param, param, zeros_param
from .resample import bilinear_matrix
from .tensor import (
    ContractError,
    Tensor,
    add,
    extract_patches,
    gelu,
    layer_norm,
    linear,
    matmul,
    reshape,
    softmax_rows,
    transpose,
)

IN_CHANNELS = 6  # rgb + 2 click maps + previous mask


class PatchEmbedder(Module):
    """Shared patch + position embedding for all configured patch sizes."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        p = cfg.base_patch
        self.kernel = param(rng, (cfg.embed_dim, IN_CHANNELS, p, p), std=0.02, dtype=dtype)
        self.bias = zeros_param((cfg.embed_dim,), dtype=dtype)
        base_grid = cfg.grid(p)
        self.pos = param(rng, (base_grid * base_grid, cfg.embed_dim), std=0.02, dtype=dtype)

    def resize_kernel(self, p: int) -> Tensor:
        """Base kernel resampled to p x p and rescaled by (base/p)²."""
        cfg = self.cfg
        if p not in cfg.patch_sizes:
            raise ConfigError(f"patch size {p} not configured (have {cfg.patch_sizes})")
        base = cfg.base_patch
        if p == base:
            return self.kernel
        m = Tensor(bilinear_matrix(base, p, dtype=self.dtype))
        flat = reshape(self.kernel, (cfg.embed_dim * IN_CHANNELS, base * base))
        resized = matmul(flat, transpose(m))
        scale = (base / p) ** 2  # constant-patch response stays scale invariant
        return reshape(resized * scale, (cfg.embed_dim, IN_CHANNELS, p, p))

    def resize_pos(self, p: int) -> Tensor:
        cfg = self.cfg
        src = cfg.grid(cfg.base_patch)
        dst = cfg.grid(p)
        if dst == src:
            return self.pos
        m = Tensor(bilinear_matrix(src, dst, dtype=self.dtype))
        return matmul(m, self.pos)

    def embed(self, x: Tensor, p: int) -> Tensor:
        """[6, side, side] image stack -> [L_p, C] tokens."""
        if x.data.ndim != 3 or x.data.shape[0] != IN_CHANNELS:
            raise ContractError(f"embed expects [{IN_CHANNELS}, H, W] input, got {x.data.shape}")
        cfg = self.cfg
        patches = extract_patches(x, p)  # [L, 6*p*p]
        k = reshape(self.resize_kernel(p), (cfg.embed_dim, IN_CHANNELS * p * p))
        tokens = linear(patches, transpose(k), self.bias)
        return add(tokens, self.resize_pos(p))


class ViTBlock(Module):
    """Pre-norm multi-head self-attention + 4x GELU MLP, both residual."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        c = cfg.embed_dim
        self.heads = cfg.heads
        self.ln1_g = ones_param((c,), dtype=dtype)
        self.ln1_b = zeros_param((c,), dtype=dtype)
        self.wq = param(rng, (c, c), dtype=dtype)
        self.bq = zeros_param((c,), dtype=dtype)
        self.wk = param(rng, (c, c), dtype=dtype)
        self.bk = zeros_param((c,), dtype=dtype)
        self.wv = param(rng, (c, c), dtype=dtype)
        self.bv = zeros_param((c,), dtype=dtype)
        self.wo = param(rng, (c, c), dtype=dtype)
        self.bo = zeros_param((c,), dtype=dtype)
        self.ln2_g = ones_param((c,), dtype=dtype)
        self.ln2_b = zeros_param((c,), dtype=dtype)
        hidden = cfg.mlp_ratio * c
        self.w1 = param(rng, (c, hidden), dtype=dtype)
        self.b1 = zeros_param((hidden,), dtype=dtype)
        self.w2 = param(rng, (hidden, c), dtype=dtype)
        self.b2 = zeros_param((c,), dtype=dtype)

    def _split_heads(self, t: Tensor, L: int, c: int) -> Tensor:
        dh = c // self.heads
        return transpose(reshape(t, (L, self.heads, dh)), (1, 0, 2))

    def attention(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Returns (mixed tokens, attention weights [H, L, L])."""
        L, c = x.data.shape
        q = self._split_heads(linear(x, self.wq, self.bq), L, c)
        k = self._split_heads(linear(x, self.wk, self.bk), L, c)
        v = self._split_heads(linear(x, self.wv, self.bv), L, c)
        dh = c // self.heads
        attn = softmax_rows(matmul(q, transpose(k, (0, 2, 1))), scale=1.0 / math.sqrt(dh))
        mixed = reshape(transpose(matmul(attn, v), (1, 0, 2)), (L, c))
        return linear(mixed, self.wo, self.bo), attn

    def __call__(self, x: Tensor) -> Tensor:
        h = layer_norm(x, self.ln1_g, self.ln1_b)
        mixed, _ = self.attention(h)
        x = add(x, mixed)
        h = layer_norm(x, self.ln2_g, self.ln2_b)
        h = linear(gelu(linear(h, self.w1, self.b1)), self.w2, self.b2)
        return add(x, h)


class Encoder(Module):
    """Patch embedding plus the transformer trunk over base tokens.

    Multi-scale fusion hooks in after the blocks listed in
    ``cfg.fusion_blocks``; the fusion machinery itself lives in
    :mod:`clickseg.multiscale` and is owned by the full model.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.embedder = PatchEmbedder(cfg, rng, dtype=dtype)
        self.blocks = [ViTBlock(cfg, rng, dtype=dtype) for _ in range(cfg.depth)]

    def embed_all(self, x: Tensor) -> dict[int, Tensor]:
        return {p: self.embedder.embed(x, p) for p in self.cfg.patch_sizes}
