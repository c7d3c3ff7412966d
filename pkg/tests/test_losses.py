"""Loss closed forms, oracles, and monotonicity properties."""

import numpy as np
import pytest

from clickseg.losses import (
    LossReport,
    downsample_mask,
    focal_loss,
    rasterize_token_gt,
    total_loss,
    triplet_token_loss,
)
from clickseg.multiscale import ScaleSelection
from clickseg.tensor import ContractError, Tape, Tensor, backward, tsum

LOG2 = 0.69314718055994530941
SOFTPLUS_10 = 10.0000453988992168646


# ---------------------------------------------------------------------------
# focal loss


def test_focal_perfect_confident_prediction_vanishes():
    gt = np.zeros((8, 8)); gt[2:6, 2:6] = 1
    logits = Tensor(np.where(gt > 0, 30.0, -30.0).astype(np.float32))
    assert focal_loss(logits, gt).item() < 1e-8


def test_focal_gamma0_alpha_half_is_half_balanced_ce():
    rng = np.random.default_rng(0)
    logits_np = rng.normal(size=(6, 6)).astype(np.float64)
    gt = (rng.random((6, 6)) > 0.5).astype(np.float64)
    got = focal_loss(Tensor(logits_np), gt, gamma=0.0, alpha=0.5).item()
    p = 1 / (1 + np.exp(-logits_np))
    ce = -(gt * np.log(p) + (1 - gt) * np.log(1 - p)).mean()
    assert got == pytest.approx(0.5 * ce, rel=1e-6)


def test_focal_closed_form_pt_half():
    # all-foreground gt, zero logits: per pixel 1 * (1/2)^2 * log 2
    gt = np.ones((4, 4))
    logits = Tensor(np.zeros((4, 4), dtype=np.float64))
    got = focal_loss(logits, gt, gamma=2.0, alpha=1.0).item()
    assert got == pytest.approx(0.25 * LOG2, rel=1e-9)


def test_focal_rejects_non_binary_gt():
    with pytest.raises(ContractError):
        focal_loss(Tensor(np.zeros((2, 2))), np.full((2, 2), 0.5))


def test_focal_rejects_shape_mismatch():
    with pytest.raises(ContractError):
        focal_loss(Tensor(np.zeros((2, 2))), np.zeros((3, 3)))


def test_focal_nonnegative_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        logits = Tensor(rng.normal(size=(5, 5)).astype(np.float32))
        gt = (rng.random((5, 5)) > 0.5).astype(np.float32)
        assert focal_loss(logits, gt).item() >= 0.0


# ---------------------------------------------------------------------------
# token ground truth


def test_rasterize_full_foreground():
    np.testing.assert_array_equal(rasterize_token_gt(np.ones((16, 16)), 8), [1, 1, 1, 1])


def test_rasterize_single_aligned_patch():
    gt = np.zeros((16, 16)); gt[8:16, 0:8] = 1  # tiny-grid cell (1, 0)
    np.testing.assert_array_equal(rasterize_token_gt(gt, 8), [0, 0, 1, 0])


def test_rasterize_majority_threshold():
    gt60 = np.zeros((8, 8)); gt60.reshape(-1)[:39] = 1   # ~61% of one 8x8 patch
    assert rasterize_token_gt(gt60, 8)[0] == 1
    gt40 = np.zeros((8, 8)); gt40.reshape(-1)[:26] = 1   # ~41%
    assert rasterize_token_gt(gt40, 8)[0] == 0


def test_downsample_mask_majority():
    gt = np.zeros((8, 8)); gt[0:4, 0:4] = 1; gt[0:4, 4:6] = 1  # second cell half-covered
    out = downsample_mask(gt, 4)
    assert out[0, 0] == 1 and out[0, 1] == 0  # exactly half is not enough


# ---------------------------------------------------------------------------
# triplet token loss


def _selection(tokens: np.ndarray, indices, patch=8, dtype=np.float64) -> ScaleSelection:
    t = Tensor(tokens.astype(dtype))
    k = tokens.shape[0]
    return ScaleSelection(scale="tiny", patch=patch, scores=Tensor(np.ones(4, dtype=np.float32)),
                          topk_scores=Tensor(np.ones(k, dtype=np.float32)),
                          indices=np.asarray(indices, dtype=np.int64),
                          matrix=Tensor(np.zeros((k, 4), dtype=np.float32)),
                          tokens=t, mean_score=1.0)


def _gt_first_cell_only(side=16, patch=8):
    gt = np.zeros((side, side)); gt[0:patch, 0:patch] = 1
    return gt


def test_triplet_equal_distances_log2():
    # one positive (token cell 0, fully foreground) and one negative, equidistant
    gt = _gt_first_cell_only()
    kernel = Tensor(np.zeros((1, 2), dtype=np.float64))
    sel = _selection(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
    rep = triplet_token_loss(kernel, [sel], gt)
    assert rep.loss.item() == pytest.approx(LOG2, abs=1e-9)
    assert rep.pair_counts["tiny"] == 1


def test_triplet_large_negative_margin_vanishes():
    gt = _gt_first_cell_only()
    kernel = Tensor(np.zeros((1, 2), dtype=np.float64))
    sel = _selection(np.array([[0.1, 0.0], [60.0, 0.0]]), [0, 1])
    rep = triplet_token_loss(kernel, [sel], gt)
    assert rep.loss.item() < 1e-15


def test_triplet_positive_margin_reference():
    # d_pos - d_neg = 11 - 1 = 10 -> frozen softplus(10)
    gt = _gt_first_cell_only()
    kernel = Tensor(np.zeros((1, 2), dtype=np.float64))
    sel = _selection(np.array([[11.0, 0.0], [1.0, 0.0]]), [0, 1])
    rep = triplet_token_loss(kernel, [sel], gt)
    assert rep.loss.item() == pytest.approx(SOFTPLUS_10, rel=1e-12)


def test_triplet_degenerate_scale_contributes_zero():
    gt = np.ones((16, 16))  # every token positive: no negatives, no pairs
    kernel = Tensor(np.zeros((1, 2), dtype=np.float32))
    sel = _selection(np.array([[1.0, 0.0], [2.0, 0.0]]), [0, 1])
    rep = triplet_token_loss(kernel, [sel], gt)
    assert rep.loss.item() == 0.0
    assert rep.pair_counts["tiny"] == 0


def test_triplet_pair_cap_and_seeding():
    gt = np.zeros((32, 32)); gt[0:8, :] = 1  # top row of the 4x4 tiny grid positive
    kernel = Tensor(np.zeros((1, 3), dtype=np.float32))
    rng = np.random.default_rng(7)
    tokens = rng.normal(size=(16, 3))
    sel = _selection(tokens, list(range(16)))
    rep1 = triplet_token_loss(kernel, [sel], gt, np.random.default_rng(5), max_pairs=10)
    rep2 = triplet_token_loss(kernel, [_selection(tokens, list(range(16)))], gt,
                              np.random.default_rng(5), max_pairs=10)
    assert rep1.pair_counts["tiny"] == 10
    assert rep1.loss.item() == pytest.approx(rep2.loss.item(), rel=1e-7)


def test_triplet_monotone_in_distances():
    # increasing d_pos raises the loss; decreasing d_neg raises it too
    gt = _gt_first_cell_only()
    kernel = Tensor(np.zeros((1, 2), dtype=np.float64))

    def loss(dp, dn):
        sel = _selection(np.array([[dp, 0.0], [0.0, dn]]), [0, 1])
        return triplet_token_loss(kernel, [sel], gt).loss.item()

    rng = np.random.default_rng(11)
    for _ in range(25):
        dp, dn = rng.uniform(0.1, 3.0, size=2)
        eps = 0.05
        assert loss(dp + eps, dn) > loss(dp, dn)
        assert loss(dp, dn - min(eps, dn / 2)) > loss(dp, dn)


# ---------------------------------------------------------------------------
# combination


def test_total_loss_is_exact_sum():
    a = Tensor(np.asarray(0.25, dtype=np.float32))
    b = Tensor(np.asarray(1.5, dtype=np.float32))
    assert total_loss(a, b).item() == 1.75
    zero = Tensor(np.asarray(0.0, dtype=np.float32))
    assert total_loss(a, zero).item() == a.item()
    assert total_loss(zero, zero).item() == 0.0


def test_total_loss_gradient_linearity():
    x = Tensor(np.array([0.3, -0.7, 1.1], dtype=np.float64), requires_grad=True)

    def l1():
        return tsum(x * x)

    def l2():
        return tsum(x * 2.0)

    with Tape():
        backward(total_loss(l1(), l2()))
    combined = x.grad.copy()
    x.zero_grad()
    with Tape():
        backward(l1())
    with Tape():
        backward(l2())
    np.testing.assert_allclose(x.grad, combined, rtol=1e-12)


def test_loss_report_additivity():
    a = Tensor(np.asarray(0.125, dtype=np.float32))
    b = Tensor(np.asarray(0.375, dtype=np.float32))
    rep = LossReport.build(a, b, total_loss(a, b), {"tiny": 3})
    assert rep.total == rep.seg + rep.contrast
