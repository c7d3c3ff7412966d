"""Iterative-click training loop with AdamW and stepped LR decay.

Each step simulates a user session: random clicks drive a first,
detached forward pass; its mask plus one corrective click feed the
second pass, and only the second pass is differentiated.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .checkpoint import save_checkpoint
from .clicks import Click, ClickState
from .config import TrainConfig
from .data import Sample, augment, gen_synthetic
from .losses import LossReport, contrastive_loss_from_records, downsample_mask, focal_loss, total_loss
from .model import Segmenter
from .optim import AdamW
from .simulate import next_click
from .tensor import Tape, Tensor, backward, no_grad


def sample_click_count(rng: np.random.Generator, decay: float = 0.8, cap: int = 24) -> int:
    """Geometric continuation: keep adding clicks with probability ``decay``."""
    n = 1
    while n < cap and rng.random() < decay:
        n += 1
    return n


def _random_point(rng: np.random.Generator, region: np.ndarray) -> tuple[int, int]:
    flat = np.flatnonzero(region)
    pick = int(flat[rng.integers(0, flat.size)])
    y, x = divmod(pick, region.shape[1])
    return x, y


def _interior(mask: np.ndarray) -> np.ndarray:
    eroded = ndimage.binary_erosion(mask.astype(bool), iterations=1)
    return eroded if eroded.any() else mask.astype(bool)


def sample_training_clicks(gt: np.ndarray, prev_pred: np.ndarray | None,
                           rng: np.random.Generator, decay: float = 0.8,
                           cap: int = 24) -> list[Click]:
    """Simulated user clicks for one training pass.

    The first click is always positive, at a random interior target
    point. Later clicks come from the error regions of ``prev_pred``
    when it exists (region picked by error mass, point uniform within),
    otherwise they are random target/background points.
    """
    gt = np.asarray(gt, dtype=bool)
    n = sample_click_count(rng, decay, cap)
    clicks = [Click(*_random_point(rng, _interior(gt)), True)]
    background = ~gt
    for _ in range(n - 1):
        if prev_pred is None:
            if background.any() and rng.random() < 0.5:
                clicks.append(Click(*_random_point(rng, background), False))
            else:
                clicks.append(Click(*_random_point(rng, gt), True))
            continue
        fn = gt & ~prev_pred.astype(bool)
        fp = prev_pred.astype(bool) & ~gt
        total = fn.sum() + fp.sum()
        if total == 0:
            break
        if rng.random() < fn.sum() / total:
            clicks.append(Click(*_random_point(rng, fn), True))
        else:
            clicks.append(Click(*_random_point(rng, fp), False))
    return clicks


@dataclass
class TrainResult:
    out_dir: Path
    checkpoints: list[Path]
    final_checkpoint: Path
    loss_csv: Path
    epoch_losses: list[float] = field(default_factory=list)


def _fill_missing_grads(params):
    # blocks whose outputs feed nothing this step legitimately have zero grad
    for p in params.values():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def _sample_step(model: Segmenter, sample: Sample, cfg: TrainConfig,
                 rng: np.random.Generator):
    """Two-pass forward for one sample; returns the loss tensor + report parts."""
    gt = sample.mask.astype(np.float32)
    clicks = sample_training_clicks(gt, None, rng, cfg.click_decay, cfg.max_train_clicks)

    first = ClickState(list(clicks), None)
    with no_grad():  # first pass only produces the mask for the second one
        probs1 = model.predict_probs(sample.image, first)
    pred1 = probs1 > 0.5

    clicks2 = list(clicks)
    if len(clicks2) < cfg.max_train_clicks:
        corrective = next_click(pred1, gt.astype(bool))
        if corrective is not None:
            clicks2.append(corrective)
    state = ClickState(clicks2, probs1)

    res = model.forward(sample.image, state, mode="train", rng=rng)
    l_seg = focal_loss(res.logits, downsample_mask(sample.mask, 4),
                       gamma=cfg.focal_gamma, alpha=cfg.focal_alpha)
    if cfg.contrastive:
        rep = contrastive_loss_from_records(res.records, sample.mask, rng, cfg.max_pairs)
    else:
        rep = contrastive_loss_from_records([], sample.mask)
    loss = total_loss(l_seg, rep.loss)
    return loss, LossReport.build(l_seg, rep.loss, loss, rep.pair_counts)


def train(cfg: TrainConfig, out_dir, model: Segmenter | None = None,
          log_every: int = 0) -> TrainResult:
    """Run the full schedule; checkpoints and a per-step loss CSV land in out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = Segmenter(cfg.model_config(), seed=cfg.seed)
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    loss_csv = out_dir / "loss_log.csv"
    csv_file = open(loss_csv, "w", newline="")
    writer = csv.writer(csv_file)
    writer.writerow(["step", "epoch", "l_seg", "l_c", "l", "pairs_tiny", "pairs_large"])

    checkpoints: list[Path] = []
    epoch_losses: list[float] = []
    step = 0
    start = time.time()
    try:
        for epoch in range(cfg.epochs):
            if epoch in cfg.lr_drop_epochs:
                opt.lr /= cfg.lr_drop_factor
            samples = gen_synthetic(cfg.seed * 100003 + epoch, cfg.samples_per_epoch, cfg.side)
            epoch_total = 0.0
            for lo in range(0, len(samples), cfg.batch_size):
                batch = samples[lo:lo + cfg.batch_size]
                if cfg.augment:
                    batch = [augment(s, rng) for s in batch]
                reports: list[LossReport] = []
                with Tape():
                    acc: Tensor | None = None
                    for sample in batch:
                        loss, report = _sample_step(model, sample, cfg, rng)
                        reports.append(report)
                        acc = loss if acc is None else acc + loss
                    batch_loss = acc * (1.0 / len(batch))
                    if not np.isfinite(batch_loss.data):
                        _dump_diagnostics(out_dir, step, reports, params)
                        raise FloatingPointError(f"non-finite loss at step {step}; diagnostics dumped")
                    backward(batch_loss)
                _fill_missing_grads(params)
                opt.step()
                opt.zero_grad()
                step += 1
                mean = float(np.mean([r.total for r in reports]))
                epoch_total += mean * len(batch)
                writer.writerow([step, epoch,
                                 f"{np.mean([r.seg for r in reports]):.6f}",
                                 f"{np.mean([r.contrast for r in reports]):.6f}",
                                 f"{mean:.6f}",
                                 sum(r.pair_counts.get('tiny', 0) for r in reports),
                                 sum(r.pair_counts.get('large', 0) for r in reports)])
                if log_every and step % log_every == 0:
                    print(f"step {step} epoch {epoch} loss {mean:.4f} "
                          f"({time.time() - start:.0f}s)", flush=True)
            epoch_losses.append(epoch_total / len(samples))
            ckpt = out_dir / f"epoch_{epoch:03d}.ckpt"
            save_checkpoint(ckpt, model, opt, extra={"epoch": epoch, "step": step})
            checkpoints.append(ckpt)
    finally:
        csv_file.close()

    final = out_dir / "final.ckpt"
    save_checkpoint(final, model, opt, extra={"epoch": cfg.epochs - 1, "step": step})
    return TrainResult(out_dir, checkpoints, final, loss_csv, epoch_losses)


def _dump_diagnostics(out_dir: Path, step: int, reports, params):
    info = {
        "step": step,
        "reports": [vars(r) for r in reports],
        "param_stats": {k: {"min": float(p.data.min()), "max": float(p.data.max()),
                            "absmean": float(np.abs(p.data).mean())}
                        for k, p in params.items()},
    }
    with open(out_dir / f"diagnostics_step{step}.json", "w") as f:
        json.dump(info, f, indent=2, default=str)
