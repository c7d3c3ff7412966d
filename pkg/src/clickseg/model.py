"""The full interactive segmenter: encoder, fusion blocks, FPN, head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clicks import ClickState, click_radius, model_input
from .config import ModelConfig
from .encoder import Encoder
from .heads import MlpHead, SimpleFPN
from .modules import Module
from .multiscale import FusionBlock, FusionRecord
from .resample import bilinear_matrix
from .tensor import Tensor


@dataclass
class ForwardResult:
    logits: Tensor                      # [side/4, side/4]
    records: list[FusionRecord] = field(default_factory=list)

    def probs_quarter(self) -> np.ndarray:
        return _sigmoid_np(self.logits.data)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


class Segmenter(Module):
    """Click-conditioned mask predictor over square RGB images."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.dtype = dtype
        self.encoder = Encoder(cfg, rng, dtype=dtype)
        self.fusions = [FusionBlock(cfg, i, rng, dtype=dtype) for i in cfg.fusion_blocks]
        self.fpn = SimpleFPN(cfg, rng, dtype=dtype)
        self.head = MlpHead(cfg, rng, dtype=dtype)
        self.radius = click_radius(cfg.side)

    def _fusion_at(self, index: int) -> FusionBlock | None:
        for f in self.fusions:
            if f.block_index == index:
                return f
        return None

    def forward(self, image: np.ndarray, state: ClickState, mode: str = "infer",
                rng: np.random.Generator | None = None) -> ForwardResult:
        """``image`` is [3, side, side] in [0, 1]; clicks in pixel coords."""
        cfg = self.cfg
        x = Tensor(model_input(image, state, self.radius).astype(self.dtype, copy=False))
        streams = self.encoder.embed_all(x)
        f_b = streams[cfg.base_patch]
        p_t, p_l = cfg.aux_patch_sizes()
        f_t, f_l = streams[p_t], streams[p_l]

        records: list[FusionRecord] = []
        for i, block in enumerate(self.encoder.blocks):
            f_b = block(f_b)
            fusion = self._fusion_at(i)
            if fusion is not None:
                f_b, f_t, f_l, rec = fusion(f_b, f_t, f_l, state, mode=mode, rng=rng)
                records.append(rec)

        feat = self.fpn(f_b)
        logits = self.head(feat)
        return ForwardResult(logits, records)

    def predict_probs(self, image: np.ndarray, state: ClickState) -> np.ndarray:
        """Full-resolution mask probabilities [side, side] (no tape needed)."""
        res = self.forward(image, state, mode="infer")
        return upsample_probs(res.probs_quarter(), self.cfg.side)

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters().values())


def upsample_probs(probs_quarter: np.ndarray, side: int) -> np.ndarray:
    """Bilinear upsample of quarter-resolution probabilities to the input size."""
    q = probs_quarter.shape[0]
    m = bilinear_matrix(q, side, dtype=np.float32)
    return (m @ probs_quarter.reshape(-1).astype(np.float32)).reshape(side, side)
