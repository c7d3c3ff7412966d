"""Automatic click simulation and NoC/NoF evaluation.

The simulated user always clicks the deepest interior point of the
largest mislabeled region: false negatives get a positive click, false
positives a negative one, exactly as a careful annotator would correct
the worst mistake first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .clicks import Click, ClickState
from .tensor import ContractError

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
CLICK_CAP = 20


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks (1.0 if both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def _components(mask: np.ndarray) -> list[np.ndarray]:
    labels, n = ndimage.label(mask, structure=FOUR_CONN)
    return [labels == i for i in range(1, n + 1)]


def _component_key(comp: np.ndarray) -> tuple:
    """Sort key: larger first, then earliest pixel in row-major order."""
    first = int(np.flatnonzero(comp.reshape(-1))[0])
    return (-int(comp.sum()), first)


def _deepest_point(comp: np.ndarray) -> tuple[int, int]:
    """Interior point farthest from the component boundary.

    The image border counts as boundary (the mask is padded with
    background before the exact Euclidean distance transform). Among
    equally deep pixels the first in row-major order wins.
    """
    padded = np.pad(comp, 1, mode="constant", constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    dist = np.where(comp, dist, -1.0)
    idx = int(np.argmax(dist))
    y, x = divmod(idx, comp.shape[1])
    return x, y


def next_click(pred: np.ndarray, gt: np.ndarray) -> Click | None:
    """Click correcting the largest error region; None when pred == gt.

    Ties between regions of equal size prefer false negatives, then the
    region whose first pixel comes earliest in row-major order.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    fn = gt & ~pred
    fp = pred & ~gt
    if not fn.any() and not fp.any():
        return None
    candidates = [(comp, True) for comp in _components(fn)]
    candidates += [(comp, False) for comp in _components(fp)]
    # positive (FN) regions sort ahead of negative on ties
    candidates.sort(key=lambda item: (_component_key(item[0]), 0 if item[1] else 1))
    comp, positive = candidates[0]
    x, y = _deepest_point(comp)
    return Click(x, y, positive)


@dataclass
class EvalRecord:
    """Outcome of the click loop on one sample."""

    sample_id: str
    ious: list[float]
    noc: dict[float, int]
    failed: dict[float, bool]
    scale_ratio: float

    @property
    def clicks_used(self) -> int:
        return len(self.ious)


def _noc_from_trace(ious: Sequence[float], tau: float, cap: int) -> tuple[int, bool]:
    for i, v in enumerate(ious):
        if v >= tau:
            return i + 1, False
    return cap, True


def evaluate_sample(predict: Callable[[ClickState], np.ndarray], gt: np.ndarray,
                    taus: Sequence[float], max_clicks: int = CLICK_CAP,
                    init_mask: np.ndarray | None = None,
                    sample_id: str = "", scale_ratio: float | None = None) -> EvalRecord:
    """Run the interactive loop until the hardest target IOU or the cap.

    ``predict`` maps a ClickState (clicks + previous mask) to mask
    probabilities at ground-truth resolution. ``init_mask`` seeds the
    previous mask for mask-correction evaluation; otherwise the loop
    starts from an empty mask.
    """
    gt = np.asarray(gt, dtype=bool)
    taus = sorted(taus)
    hardest = max(taus)
    if init_mask is not None:
        prev = np.asarray(init_mask, dtype=np.float32)
        pred_bin = prev > 0.5
    else:
        prev = np.zeros(gt.shape, dtype=np.float32)
        pred_bin = np.zeros(gt.shape, dtype=bool)
    state = ClickState([], prev)
    ious: list[float] = []
    for _ in range(max_clicks):
        click = next_click(pred_bin, gt)
        if click is None:
            break
        state.clicks.append(click)
        probs = predict(state)
        state.prev_mask = probs
        pred_bin = probs > 0.5
        ious.append(iou(pred_bin, gt))
        if ious[-1] >= hardest:
            break
    noc = {}
    failed = {}
    for tau in taus:
        noc[tau], failed[tau] = _noc_from_trace(ious, tau, max_clicks)
    if scale_ratio is None:
        scale_ratio = float(gt.sum() / gt.size)
    return EvalRecord(sample_id, ious, noc, failed, scale_ratio)


def aggregate(records: Sequence[EvalRecord], tau: float) -> tuple[float, int]:
    """Mean NoC@tau (failures count the cap) and the failure count."""
    if not records:
        raise ContractError("aggregate needs at least one record")
    mean = float(np.mean([r.noc[tau] for r in records]))
    nof = sum(1 for r in records if r.failed[tau])
    return mean, nof


def noc_scale_bins(records: Sequence[EvalRecord], tau: float,
                   edges: Sequence[float] | None = None) -> list[dict]:
    """Mean NoC binned by target-area-to-image-area ratio.

    Bins are [lo, hi) except the last, which closes at the top edge so
    every record lands in exactly one bin.
    """
    if not records:
        raise ContractError("noc_scale_bins needs at least one record")
    if edges is None:
        edges = [i / 10 for i in range(11)]
    edges = list(edges)
    bins = []
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        last = i == len(edges) - 2
        members = [r for r in records
                   if (lo <= r.scale_ratio < hi) or (last and r.scale_ratio == hi)]
        bins.append({
            "lo": lo,
            "hi": hi,
            "count": len(members),
            "mean_noc": float(np.mean([r.noc[tau] for r in members])) if members else None,
        })
    return bins


def degrade_mask(gt: np.ndarray, rng: np.random.Generator,
                 lo: float = 0.75, hi: float = 0.85, max_tries: int = 200) -> np.ndarray:
    """Perturb gt until its IOU against the original lands in [lo, hi].

    Used to seed mask-correction evaluation with an imperfect initial
    mask. Random shifts plus dilation/erosion, retried until the band is
    hit.
    """
    gt = np.asarray(gt, dtype=bool)
    h, w = gt.shape
    span = max(2, int(np.sqrt(gt.sum()) * 0.35))
    for _ in range(max_tries):
        dx, dy = rng.integers(-span, span + 1, size=2)
        shifted = np.zeros_like(gt)
        ys = slice(max(0, dy), min(h, h + dy))
        xs = slice(max(0, dx), min(w, w + dx))
        ys_src = slice(max(0, -dy), min(h, h - dy))
        xs_src = slice(max(0, -dx), min(w, w - dx))
        shifted[ys, xs] = gt[ys_src, xs_src]
        r = int(rng.integers(0, 3))
        if r:
            op = ndimage.binary_dilation if rng.random() < 0.5 else ndimage.binary_erosion
            shifted = op(shifted, iterations=r)
        score = iou(shifted, gt)
        if lo <= score <= hi and shifted.any():
            return shifted.astype(np.float32)
    raise ContractError(f"could not degrade mask into IOU band [{lo}, {hi}]")


def write_report_csv(records: Sequence[EvalRecord], path, taus: Sequence[float],
                     max_clicks: int = CLICK_CAP) -> None:
    """One row per sample: id, scale ratio, the IOU trace, NoC per target."""
    taus = sorted(taus)
    hardest = max(taus)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["id", "scale_ratio"]
        header += [f"iou_{i + 1}" for i in range(max_clicks)]
        header += [f"noc{int(round(t * 100))}" for t in taus]
        header.append("failed")
        writer.writerow(header)
        for r in records:
            row = [r.sample_id, f"{r.scale_ratio:.6f}"]
            row += [f"{v:.6f}" for v in r.ious]
            row += [""] * (max_clicks - len(r.ious))
            row += [str(r.noc[t]) for t in taus]
            row.append(str(int(r.failed[hardest])))
            writer.writerow(row)
