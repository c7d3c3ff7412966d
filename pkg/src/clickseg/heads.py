"""Feature pyramid over the final base tokens and the MLP mask head."""

from __future__ import annotations

import math

import numpy as np

from .config import ModelConfig
from .modules import Module, param, zeros_param
from .resample import bilinear_matrix, halfpool_matrix
from .tensor import ContractError, Tensor, add, gelu, linear, matmul, reshape, transpose


def _convt2x2(x: Tensor, grid: int, w: Tensor, b: Tensor) -> Tensor:
    """Stride-2 2x2 transposed convolution on token grid [g², Cin] -> [(2g)², Cout].

    With kernel = stride the output blocks never overlap, so the op is a
    per-token linear map into 2x2 sub-pixels followed by interleaving.
    """
    cin = x.data.shape[1]
    cout = w.data.shape[1] // 4
    y = linear(x, w, b)                       # [g², 4*Cout]
    y = reshape(y, (grid, grid, 2, 2, cout))
    y = transpose(y, (0, 2, 1, 3, 4))         # rows: (g, 2), cols: (g, 2)
    return reshape(y, (4 * grid * grid, cout))


class SimpleFPN(Module):
    """Four branches from the 1/16 token grid, summed at 1/4 resolution.

    up4: two stride-2 transposed convs; up2: one; id: 1x1 projection;
    down: stride-2 mean pool then 1x1 projection. Each branch lands in
    ``fpn_dim`` channels and is bilinearly resampled onto the 1/4 grid.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        c = cfg.embed_dim
        c2 = cfg.fpn_dim
        self.cfg = cfg
        self.dtype = dtype
        self.up4_w1 = param(rng, (c, 4 * c2), std=0.05, dtype=dtype)
        self.up4_b1 = zeros_param((4 * c2,), dtype=dtype)
        self.up4_w2 = param(rng, (c2, 4 * c2), std=0.05, dtype=dtype)
        self.up4_b2 = zeros_param((4 * c2,), dtype=dtype)
        self.up2_w = param(rng, (c, 4 * c2), std=0.05, dtype=dtype)
        self.up2_b = zeros_param((4 * c2,), dtype=dtype)
        self.id_w = param(rng, (c, c2), std=0.05, dtype=dtype)
        self.id_b = zeros_param((c2,), dtype=dtype)
        self.down_w = param(rng, (c, c2), std=0.05, dtype=dtype)
        self.down_b = zeros_param((c2,), dtype=dtype)

    def _to_target(self, x: Tensor, src_grid: int, dst_grid: int) -> Tensor:
        if src_grid == dst_grid:
            return x
        return matmul(Tensor(bilinear_matrix(src_grid, dst_grid, dtype=self.dtype)), x)

    def __call__(self, f_b: Tensor) -> Tensor:
        """[L_b, C] -> [ (4g)², fpn_dim ] feature tokens on the 1/4 grid."""
        L = f_b.data.shape[0]
        g = int(math.isqrt(L))
        if g * g != L:
            raise ContractError(f"{L} tokens do not form a square grid")
        target = 4 * g

        a = _convt2x2(f_b, g, self.up4_w1, self.up4_b1)
        a = _convt2x2(gelu(a), 2 * g, self.up4_w2, self.up4_b2)   # 4g

        b = _convt2x2(f_b, g, self.up2_w, self.up2_b)             # 2g
        b = self._to_target(b, 2 * g, target)

        c = linear(f_b, self.id_w, self.id_b)                     # g
        c = self._to_target(c, g, target)

        d = matmul(Tensor(halfpool_matrix(g, dtype=self.dtype)), f_b)
        d = linear(d, self.down_w, self.down_b)                   # ceil(g/2)
        d = self._to_target(d, (g + 1) // 2, target)

        return add(add(a, b), add(c, d))


class MlpHead(Module):
    """Two affine layers with a GELU between; emits per-pixel logits."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        c2 = cfg.fpn_dim
        self.cfg = cfg
        self.w1 = param(rng, (c2, c2), std=0.05, dtype=dtype)
        self.b1 = zeros_param((c2,), dtype=dtype)
        self.w2 = param(rng, (c2, cfg.n_cls), std=0.05, dtype=dtype)
        self.b2 = zeros_param((cfg.n_cls,), dtype=dtype)

    def __call__(self, feat: Tensor) -> Tensor:
        """[L, fpn_dim] quarter-grid features -> [q, q] logits (n_cls=1)."""
        h = linear(gelu(linear(feat, self.w1, self.b1)), self.w2, self.b2)
        q = int(math.isqrt(feat.data.shape[0]))
        return reshape(h, (q, q))
