"""Synthetic data generation, augmentation, click sampling, training loop."""

import csv
from pathlib import Path

import numpy as np
import pytest

from clickseg.checkpoint import load_checkpoint, load_optimizer
from clickseg.clicks import ClickState
from clickseg.config import ConfigError, TrainConfig
from clickseg.data import Sample, apply_augment, augment, gen_synthetic, load_dataset, make_sample, save_dataset
from clickseg.losses import downsample_mask, focal_loss
from clickseg.model import Segmenter
from clickseg.optim import AdamW
from clickseg.tensor import Tape, backward
from clickseg.train import sample_click_count, sample_training_clicks, train


# ---------------------------------------------------------------------------
# dataset generation


def test_same_seed_identical_dataset():
    a = gen_synthetic(7, 10, 112)
    b = gen_synthetic(7, 10, 112)
    for s1, s2 in zip(a, b):
        np.testing.assert_array_equal(s1.image, s2.image)
        np.testing.assert_array_equal(s1.mask, s2.mask)


def test_dataset_size_and_nonempty_masks():
    samples = gen_synthetic(1, 100, 112)
    assert len(samples) == 100
    for s in samples:
        assert s.mask.sum() > 0
        assert 0.0 < s.scale_ratio < 1.0
        assert s.image.shape == (3, 112, 112)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0


def test_requested_scale_ratio_honored():
    rng = np.random.default_rng(3)
    hits = 0
    n = 60
    for _ in range(n):
        s = make_sample(rng, 112, scale_ratio=0.25)
        if abs(s.scale_ratio - 0.25) <= 0.05:
            hits += 1
    assert hits >= 0.9 * n


def test_dataset_roundtrip(tmp_path):
    samples = gen_synthetic(9, 5, 112)
    path = tmp_path / "ds.npz"
    save_dataset(samples, path)
    loaded = load_dataset(path)
    assert len(loaded) == 5
    for a, b in zip(samples, loaded):
        np.testing.assert_array_equal(a.mask, b.mask)
        assert a.kind == b.kind
        np.testing.assert_allclose(a.image, b.image, atol=1 / 254)


# ---------------------------------------------------------------------------
# augmentation


def test_augment_identity_path():
    s = gen_synthetic(11, 1, 112)[0]
    out = apply_augment(s, flip=False, scale=1.0, ox=0, oy=0)
    np.testing.assert_array_equal(out.image, s.image)
    np.testing.assert_array_equal(out.mask, s.mask)


def test_flip_twice_is_identity():
    s = gen_synthetic(12, 1, 112)[0]
    once = apply_augment(s, flip=True, scale=1.0, ox=0, oy=0)
    twice = apply_augment(once, flip=True, scale=1.0, ox=0, oy=0)
    np.testing.assert_array_equal(twice.image, s.image)
    np.testing.assert_array_equal(twice.mask, s.mask)


def test_augment_keeps_image_mask_aligned():
    # transform the mask itself as an image with the same parameters;
    # the two must agree apart from boundary resampling fuzz
    rng = np.random.default_rng(13)
    s = gen_synthetic(14, 1, 112)[0]
    for _ in range(10):
        flip = bool(rng.random() < 0.5)
        scale = float(rng.uniform(0.75, 1.4))
        new_side = max(8, round(112 * scale))
        span = abs(new_side - 112)
        ox = int(rng.integers(0, span + 1))
        oy = int(rng.integers(0, span + 1))
        moved = apply_augment(s, flip, scale, ox, oy)
        as_image = Sample(np.tile(s.mask[None].astype(np.float32), (3, 1, 1)),
                          s.mask, s.kind, s.scale_ratio)
        moved_image = apply_augment(as_image, flip, scale, ox, oy)
        proxy = moved_image.image[0] > 0.5
        mask = moved.mask > 0
        if new_side < 112:  # padding carries image mean; compare content only
            content = np.zeros((112, 112), dtype=bool)
            content[oy:oy + new_side, ox:ox + new_side] = True
            proxy &= content
            mask &= content
        inter = np.logical_and(proxy, mask).sum()
        union = np.logical_or(proxy, mask).sum()
        if union:
            # sub-pixel fuzz from bilinear-vs-nearest resampling is fine;
            # a real misalignment (e.g. one-sided flip) would land near 0.5
            assert inter / union >= 0.9


def test_augment_never_empties_mask():
    rng = np.random.default_rng(15)
    for seed in range(5):
        s = gen_synthetic(seed, 1, 112)[0]
        out = augment(s, rng)
        assert out.mask.sum() > 0


# ---------------------------------------------------------------------------
# click sampling


def test_click_count_decay_zero_single_click():
    rng = np.random.default_rng(0)
    assert all(sample_click_count(rng, decay=0.0) == 1 for _ in range(50))


def test_click_count_cap():
    rng = np.random.default_rng(1)
    assert all(sample_click_count(rng, decay=1.0) == 24 for _ in range(10))
    assert max(sample_click_count(rng, decay=0.97) for _ in range(2000)) <= 24


def test_click_count_monte_carlo_mean():
    # geometric continuation with decay 0.8 capped at 24: mean = 4.976...
    rng = np.random.default_rng(2)
    draws = [sample_click_count(rng) for _ in range(100_000)]
    assert np.mean(draws) == pytest.approx(4.976, abs=0.05)


def test_training_clicks_first_is_positive_interior():
    rng = np.random.default_rng(3)
    gt = np.zeros((64, 64), dtype=bool)
    gt[20:40, 20:40] = True
    for _ in range(20):
        clicks = sample_training_clicks(gt, None, rng)
        assert clicks[0].positive
        assert gt[clicks[0].y, clicks[0].x]
        assert len(clicks) <= 24


def test_training_clicks_use_error_regions():
    rng = np.random.default_rng(4)
    gt = np.zeros((64, 64), dtype=bool)
    gt[10:30, 10:30] = True
    pred = np.zeros((64, 64), dtype=bool)
    pred[40:60, 40:60] = True  # pure false positive region
    for _ in range(20):
        clicks = sample_training_clicks(gt, pred, rng)
        for c in clicks[1:]:
            if c.positive:
                assert gt[c.y, c.x] and not pred[c.y, c.x]
            else:
                assert pred[c.y, c.x] and not gt[c.y, c.x]


def test_invalid_decay_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(click_decay=0.0)


# ---------------------------------------------------------------------------
# training loop (smoke scale)


def _smoke_config(**kw):
    base = dict(epochs=2, samples_per_epoch=8, batch_size=4, lr=3e-4,
                lr_drop_epochs=(1,), seed=5, augment=False)
    base.update(kw)
    return TrainConfig(**base)


def test_smoke_train_runs_and_logs(tmp_path):
    result = train(_smoke_config(), tmp_path / "run")
    assert result.final_checkpoint.exists()
    assert len(result.checkpoints) == 2
    rows = list(csv.DictReader(open(result.loss_csv)))
    assert len(rows) == 4  # 2 epochs x 2 steps
    assert {"step", "epoch", "l_seg", "l_c", "l", "pairs_tiny", "pairs_large"} <= set(rows[0])
    for row in rows:
        assert np.isfinite(float(row["l"]))
        assert float(row["l"]) == pytest.approx(float(row["l_seg"]) + float(row["l_c"]), abs=2e-6)


def test_lr_drop_is_exact(tmp_path):
    cfg = _smoke_config(lr=1e-3, lr_drop_epochs=(1,))
    model = Segmenter(cfg.model_config(), seed=cfg.seed)
    result = train(cfg, tmp_path / "run", model=model)
    opt = AdamW(model.parameters(), lr=cfg.lr)
    load_optimizer(result.final_checkpoint, opt)
    assert opt.lr == pytest.approx(1e-3 / 10, rel=1e-9)


def test_checkpoint_roundtrip_reproduces_next_loss(tmp_path):
    cfg = _smoke_config()
    result = train(cfg, tmp_path / "run")
    model = load_checkpoint(result.final_checkpoint)

    sample = gen_synthetic(42, 1, 112)[0]
    state = ClickState([], None)
    ys, xs = np.nonzero(sample.mask)
    state.add(int(xs[len(xs) // 2]), int(ys[len(ys) // 2]), True)

    def next_loss(m):
        with Tape():
            res = m.forward(sample.image, state)
            loss = focal_loss(res.logits, downsample_mask(sample.mask, 4))
            backward(loss)
        return float(loss.data)

    first = next_loss(model)
    again = next_loss(load_checkpoint(result.final_checkpoint))
    assert first == again


def test_training_deterministic_under_seed(tmp_path):
    r1 = train(_smoke_config(), tmp_path / "a")
    r2 = train(_smoke_config(), tmp_path / "b")
    assert Path(r1.loss_csv).read_text() == Path(r2.loss_csv).read_text()
    m1 = load_checkpoint(r1.final_checkpoint)
    m2 = load_checkpoint(r2.final_checkpoint)
    for key, p in m1.parameters().items():
        np.testing.assert_array_equal(p.data, m2.parameters()[key].data)


def test_contrastive_flag_changes_loss_mix(tmp_path):
    r_on = train(_smoke_config(contrastive=True), tmp_path / "on")
    r_off = train(_smoke_config(contrastive=False), tmp_path / "off")
    rows_on = list(csv.DictReader(open(r_on.loss_csv)))
    rows_off = list(csv.DictReader(open(r_off.loss_csv)))
    assert any(float(r["l_c"]) > 0 for r in rows_on)
    assert all(float(r["l_c"]) == 0.0 for r in rows_off)
