"""Patch embedding, ViT blocks, and encoder-level invariants."""

import numpy as np
import pytest

from clickseg.config import ConfigError, ModelConfig
from clickseg.encoder import IN_CHANNELS, Encoder, PatchEmbedder, ViTBlock
from clickseg.tensor import ContractError, Tensor


def make_embedder(side=112, dtype=np.float32, seed=0):
    cfg = ModelConfig(side=side)
    return cfg, PatchEmbedder(cfg, np.random.default_rng(seed), dtype=dtype)


def test_resize_kernel_identity_at_base_patch():
    _, emb = make_embedder()
    out = emb.resize_kernel(16)
    assert out is emb.kernel  # bit-identical by construction


def test_resize_kernel_constant_rescale():
    # constant kernel value v resized to p=8 must become v * (16/8)^2 = 4v
    _, emb = make_embedder()
    emb.kernel.data[...] = 0.25
    out = emb.resize_kernel(8)
    assert out.data.shape == (64, IN_CHANNELS, 8, 8)
    np.testing.assert_allclose(out.data, 1.0, rtol=1e-6)


def test_resize_kernel_unconfigured_patch():
    _, emb = make_embedder()
    with pytest.raises(ConfigError):
        emb.resize_kernel(14)


@pytest.mark.parametrize("side,counts", [(112, {16: 49, 8: 196, 28: 16}),
                                         (448, {16: 784, 8: 3136, 28: 256})])
def test_token_counts(side, counts):
    cfg, emb = make_embedder(side=side)
    x = Tensor(np.random.default_rng(0).random((IN_CHANNELS, side, side), dtype=np.float32))
    for p, expected in counts.items():
        tokens = emb.embed(x, p)
        assert tokens.data.shape == (expected, cfg.embed_dim)


def test_resized_position_grid_preserves_corners():
    # corner alignment: the four grid corners survive resampling exactly
    cfg, emb = make_embedder()
    base_grid = cfg.grid(16)
    for p in (8, 28):
        g = cfg.grid(p)
        pos = emb.resize_pos(p).data
        corners_src = [0, base_grid - 1, (base_grid - 1) * base_grid, base_grid * base_grid - 1]
        corners_dst = [0, g - 1, (g - 1) * g, g * g - 1]
        for cs, cd in zip(corners_src, corners_dst):
            np.testing.assert_allclose(pos[cd], emb.pos.data[cs], atol=1e-6)


def test_embed_rejects_wrong_channel_count():
    _, emb = make_embedder()
    with pytest.raises(ContractError):
        emb.embed(Tensor(np.zeros((3, 112, 112), dtype=np.float32)), 16)


def test_constant_image_gives_equal_tokens_per_scale():
    # translation symmetry requires silencing the position embedding
    _, emb = make_embedder()
    emb.pos.data[...] = 0.0
    x = Tensor(np.full((IN_CHANNELS, 112, 112), 0.37, dtype=np.float32))
    for p in (8, 16, 28):
        tokens = emb.embed(x, p).data
        np.testing.assert_allclose(tokens - tokens[0], 0.0, atol=2e-5)


def test_zero_image_zero_pos_gives_zero_tokens():
    _, emb = make_embedder()
    emb.pos.data[...] = 0.0
    x = Tensor(np.zeros((IN_CHANNELS, 112, 112), dtype=np.float32))
    for p in (8, 16, 28):
        np.testing.assert_array_equal(emb.embed(x, p).data, 0.0)


# ---------------------------------------------------------------------------
# ViT block


def test_attention_rows_sum_to_one():
    cfg = ModelConfig()
    block = ViTBlock(cfg, np.random.default_rng(1))
    x = Tensor(np.random.default_rng(2).normal(size=(10, cfg.embed_dim)).astype(np.float32))
    _, attn = block.attention(x)
    np.testing.assert_allclose(attn.data.sum(axis=-1), np.ones((cfg.heads, 10)), atol=1e-6)


def test_single_token_attention_is_identity_mixing():
    cfg = ModelConfig()
    block = ViTBlock(cfg, np.random.default_rng(1))
    x = Tensor(np.random.default_rng(2).normal(size=(1, cfg.embed_dim)).astype(np.float32))
    _, attn = block.attention(x)
    np.testing.assert_allclose(attn.data, np.ones((cfg.heads, 1, 1)), atol=1e-7)


def test_block_is_permutation_equivariant():
    cfg = ModelConfig()
    block = ViTBlock(cfg, np.random.default_rng(3))
    x = np.random.default_rng(4).normal(size=(5, cfg.embed_dim)).astype(np.float32)
    perm = np.array([3, 0, 4, 1, 2])
    out = block(Tensor(x)).data
    out_perm = block(Tensor(x[perm])).data
    np.testing.assert_allclose(out_perm, out[perm], rtol=2e-4, atol=1e-5)


def test_block_preserves_shape():
    cfg = ModelConfig()
    block = ViTBlock(cfg, np.random.default_rng(5))
    x = Tensor(np.random.default_rng(6).normal(size=(49, cfg.embed_dim)).astype(np.float32))
    assert block(x).data.shape == (49, cfg.embed_dim)


def test_encoder_deterministic():
    cfg = ModelConfig()
    enc = Encoder(cfg, np.random.default_rng(7))
    x = Tensor(np.random.default_rng(8).random((IN_CHANNELS, 112, 112), dtype=np.float32))
    a = enc.embedder.embed(x, 16)
    for block in enc.blocks:
        a = block(a)
    b = enc.embedder.embed(x, 16)
    for block in enc.blocks:
        b = block(b)
    np.testing.assert_array_equal(a.data, b.data)
