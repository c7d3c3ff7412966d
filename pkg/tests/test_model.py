"""Whole-model behavior: shapes, determinism, checkpoint fidelity, gradients."""

import numpy as np
import pytest

from clickseg.checkpoint import checkpoint_extra, load_checkpoint, load_optimizer, save_checkpoint
from clickseg.clicks import Click, ClickState
from clickseg.config import ModelConfig
from clickseg.model import Segmenter, upsample_probs
from clickseg.optim import AdamW
from clickseg.tensor import ContractError, Tape, backward, finite_difference, no_grad, tmean, tsum


def tiny_state():
    return ClickState([Click(56, 48, True), Click(20, 90, False)])


def test_forward_shapes_desk():
    model = Segmenter(ModelConfig(), seed=0)
    img = np.random.default_rng(1).random((3, 112, 112), dtype=np.float32)
    res = model.forward(img, tiny_state())
    assert res.logits.data.shape == (28, 28)
    probs = model.predict_probs(img, tiny_state())
    assert probs.shape == (112, 112)
    assert probs.min() >= 0.0 and probs.max() <= 1.0


def test_forward_deterministic():
    model = Segmenter(ModelConfig(), seed=2)
    img = np.random.default_rng(3).random((3, 112, 112), dtype=np.float32)
    a = model.predict_probs(img, tiny_state())
    b = model.predict_probs(img, tiny_state())
    np.testing.assert_array_equal(a, b)


def test_upsample_preserves_bounds():
    rng = np.random.default_rng(4)
    q = rng.random((28, 28)).astype(np.float32)
    up = upsample_probs(q, 112)
    assert up.min() >= q.min() - 1e-6 and up.max() <= q.max() + 1e-6


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = Segmenter(ModelConfig(), seed=5)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, extra={"note": "test"})
    clone = load_checkpoint(path)
    for key, p in model.parameters().items():
        np.testing.assert_array_equal(clone.parameters()[key].data, p.data)
    assert checkpoint_extra(path) == {"note": "test"}

    img = np.random.default_rng(6).random((3, 112, 112), dtype=np.float32)
    np.testing.assert_array_equal(model.predict_probs(img, tiny_state()),
                                  clone.predict_probs(img, tiny_state()))


def test_checkpoint_optimizer_roundtrip(tmp_path):
    model = Segmenter(ModelConfig(), seed=7)
    params = model.parameters()
    opt = AdamW(params, lr=0.01)
    for p in params.values():
        p.grad = np.ones_like(p.data) * 0.1
    opt.step()
    path = tmp_path / "with_opt.ckpt"
    save_checkpoint(path, model, opt)

    clone = load_checkpoint(path)
    opt2 = AdamW(clone.parameters(), lr=0.01)
    load_optimizer(path, opt2)
    assert opt2.step_count == 1
    for key in opt.m:
        np.testing.assert_array_equal(opt2.m[key], opt.m[key])


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ContractError):
        load_checkpoint(path)


def test_no_grad_forward_builds_no_graph():
    model = Segmenter(ModelConfig(depth=1, fusion_blocks=(0,)), seed=8)
    img = np.random.default_rng(9).random((3, 112, 112), dtype=np.float32)
    with Tape() as tape:
        with no_grad():
            model.predict_probs(img, tiny_state())
        assert len(tape.ops) == 0


def _fd_check(model, img, state, checked_names, loss_fn, seed=12, n_coords=3):
    params = model.parameters()
    for p in params.values():
        p.zero_grad()
    with Tape():
        backward(loss_fn())
    fd_rng = np.random.default_rng(seed)
    worst = 0.0
    for name in checked_names:
        p = params[name]
        assert p.grad is not None, f"{name} missing grad"
        idxs = fd_rng.choice(p.data.size, size=min(n_coords, p.data.size), replace=False)
        for i in idxs:
            with no_grad():
                num = finite_difference(lambda: float(loss_fn().data), p, int(i), eps=1e-5)
            ana = float(p.grad.reshape(-1)[int(i)])
            rel = abs(num - ana) / max(1.0, abs(num), abs(ana))
            worst = max(worst, rel)
    return worst


@pytest.mark.slow
def test_end_to_end_gradient_vs_finite_differences_float64():
    """One-block model, through selection and fusion, checked in 64-bit."""
    cfg = ModelConfig(depth=1, fusion_blocks=(0,))
    model = Segmenter(cfg, seed=10, dtype=np.float64)
    rng = np.random.default_rng(11)
    img = rng.random((3, 112, 112))
    state = ClickState([Click(56, 56, True), Click(10, 100, True)])

    def loss_fn():
        res = model.forward(img, state, mode="infer")
        return tmean(res.logits * res.logits) + tsum(res.records[0].selections["tiny"].topk_scores)

    checked = [
        "encoder.embedder.kernel",
        "encoder.embedder.pos",
        "encoder.blocks.0.wq",
        "fusions.0.fuse.wv",
        "fpn.up4_w1",
        "head.w2",
    ]
    worst = _fd_check(model, img, state, checked, loss_fn)
    assert worst <= 1e-4, f"worst relative error {worst:.3e}"


def test_patch_kernel_gradient_float32():
    """Gradient reaches the patch kernel in working precision too."""
    cfg = ModelConfig(depth=1, fusion_blocks=(0,))
    model = Segmenter(cfg, seed=10, dtype=np.float32)
    img = np.random.default_rng(11).random((3, 112, 112)).astype(np.float32)
    state = ClickState([Click(56, 56, True)])

    def loss_fn():
        res = model.forward(img, state, mode="infer")
        return tmean(res.logits * res.logits)

    params = model.parameters()
    for p in params.values():
        p.zero_grad()
    with Tape():
        backward(loss_fn())
    kern = params["encoder.embedder.kernel"]
    fd_rng = np.random.default_rng(12)
    worst = 0.0
    for i in fd_rng.choice(kern.data.size, size=5, replace=False):
        with no_grad():
            num = finite_difference(lambda: float(loss_fn().data), kern, int(i), eps=1e-2)
        ana = float(kern.grad.reshape(-1)[int(i)])
        worst = max(worst, abs(num - ana) / max(1.0, abs(num), abs(ana)))
    assert worst <= 1e-3, f"32-bit patch-kernel gradient rel err {worst:.2e}"


@pytest.mark.slow
def test_refresh_gradient_flows_through_second_block():
    """The stream refresh feeds the next block's selection; check its grads."""
    cfg = ModelConfig(depth=2, fusion_blocks=(0, 1))
    model = Segmenter(cfg, seed=13, dtype=np.float64)
    rng = np.random.default_rng(14)
    img = rng.random((3, 112, 112))
    state = ClickState([Click(40, 72, True)])

    def loss_fn():
        res = model.forward(img, state, mode="infer")
        return tmean(res.logits * res.logits) + tsum(res.records[1].selections["tiny"].topk_scores)

    worst = _fd_check(model, img, state, ["fusions.0.refresh.wq", "fusions.0.refresh.wo"], loss_fn)
    assert worst <= 1e-4, f"worst relative error {worst:.3e}"
