"""Synthetic scenes for desk-scale training and evaluation.

Each sample is a textured background with a single target shape
(ellipse, box, or blob) plus a few distractor shapes. The target mask
area is steered toward a requested fraction of the image, so evaluation
can cover the whole small-to-large spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

KINDS = ("ellipse", "box", "blob")


@dataclass
class Sample:
    image: np.ndarray   # [3, side, side] float32 in [0, 1]
    mask: np.ndarray    # [side, side] uint8 in {0, 1}
    kind: str
    scale_ratio: float  # mask area / image area

    @property
    def side(self) -> int:
        return self.mask.shape[0]


def _textured_background(rng: np.random.Generator, side: int) -> np.ndarray:
    base = rng.uniform(0.15, 0.85, size=3)
    coarse = rng.uniform(-0.12, 0.12, size=(3, 4, 4))
    img = np.empty((3, side, side), dtype=np.float32)
    for c in range(3):
        plane = np.array(Image.fromarray(coarse[c].astype(np.float32), mode="F")
                         .resize((side, side), Image.BILINEAR))
        img[c] = base[c] + plane
    return np.clip(img, 0.0, 1.0)


def _shape_mask(rng: np.random.Generator, side: int, kind: str,
                area: float, center: tuple[float, float]) -> np.ndarray:
    """Rasterize one shape of roughly the requested pixel area."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    cy, cx = center
    theta = rng.uniform(0, np.pi)
    ct, st = np.cos(theta), np.sin(theta)
    xr = (xx - cx) * ct + (yy - cy) * st
    yr = -(xx - cx) * st + (yy - cy) * ct
    aspect = rng.uniform(0.5, 2.0)
    if kind == "ellipse":
        a = np.sqrt(area * aspect / np.pi)
        b = a / aspect
        return ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0).astype(np.uint8)
    if kind == "box":
        a = np.sqrt(area * aspect) / 2
        b = np.sqrt(area / aspect) / 2
        return ((np.abs(xr) <= a) & (np.abs(yr) <= b)).astype(np.uint8)
    if kind == "blob":
        n_knots = 8
        base_r = np.sqrt(area / np.pi)
        knots = base_r * rng.uniform(0.6, 1.4, size=n_knots)
        ang = np.arctan2(yr, xr)
        pos = (ang + np.pi) / (2 * np.pi) * n_knots
        i0 = np.floor(pos).astype(int) % n_knots
        i1 = (i0 + 1) % n_knots
        frac = pos - np.floor(pos)
        radius = knots[i0] * (1 - frac) + knots[i1] * frac
        return (np.hypot(xr, yr) <= radius).astype(np.uint8)
    raise ValueError(f"unknown shape kind {kind!r}")


def _paint(image: np.ndarray, mask: np.ndarray, color: np.ndarray):
    sel = mask.astype(bool)
    for c in range(3):
        image[c][sel] = color[c]


def make_sample(rng: np.random.Generator, side: int,
                scale_ratio: float | None = None, kind: str | None = None) -> Sample:
    """One scene; the target lands within a few percent of ``scale_ratio``."""
    if scale_ratio is None:
        scale_ratio = rng.uniform(0.01, 0.8)
    if kind is None:
        kind = KINDS[rng.integers(0, len(KINDS))]
    image = _textured_background(rng, side)
    bg_color = image.mean(axis=(1, 2))

    for _ in range(rng.integers(1, 4)):
        d_area = rng.uniform(0.004, 0.05) * side * side
        d_r = np.sqrt(d_area)
        dc = rng.uniform(d_r, side - d_r, size=2)
        d_mask = _shape_mask(rng, side, KINDS[rng.integers(0, len(KINDS))], d_area, (dc[0], dc[1]))
        _paint(image, d_mask, rng.uniform(0.0, 1.0, size=3))

    target_area = scale_ratio * side * side
    for _ in range(10):
        color = rng.uniform(0.0, 1.0, size=3)
        if np.abs(color - bg_color).sum() >= 0.6:
            break

    area = target_area
    mask = None
    for _ in range(4):
        r = np.sqrt(area / np.pi)
        margin = min(r + 1, side / 2 - 1)
        center = rng.uniform(margin, side - margin, size=2)
        mask = _shape_mask(rng, side, kind, area, (center[0], center[1]))
        got = mask.sum()
        if got == 0:
            area *= 2.0
            continue
        if abs(got - target_area) / max(target_area, 1.0) < 0.04:
            break
        area *= target_area / got
    if mask is None or mask.sum() == 0:
        # tiny fallback dot so the invariant (nonempty mask) always holds
        mask = np.zeros((side, side), dtype=np.uint8)
        cy, cx = side // 2, side // 2
        mask[cy - 1:cy + 2, cx - 1:cx + 2] = 1

    _paint(image, mask, color)
    noise = rng.normal(0.0, 0.02, size=image.shape).astype(np.float32)
    image = np.clip(image + noise, 0.0, 1.0)
    ratio = float(mask.sum() / mask.size)
    return Sample(image.astype(np.float32), mask.astype(np.uint8), kind, ratio)


def gen_synthetic(seed: int, n: int, side: int) -> list[Sample]:
    """Deterministic dataset: ratios sweep [0.01, 0.8] uniformly."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    return [make_sample(rng, side) for _ in range(n)]


# ---------------------------------------------------------------------------
# augmentation


def _resize_pair(image: np.ndarray, mask: np.ndarray, new_side: int) -> tuple[np.ndarray, np.ndarray]:
    chans = [np.array(Image.fromarray(image[c], mode="F").resize((new_side, new_side), Image.BILINEAR))
             for c in range(3)]
    m = np.array(Image.fromarray(mask.astype(np.uint8), mode="L")
                 .resize((new_side, new_side), Image.NEAREST))
    return np.stack(chans).astype(np.float32), (m > 0).astype(np.uint8)


def apply_augment(sample: Sample, flip: bool, scale: float, ox: int, oy: int) -> Sample:
    """Deterministic flip + rescale + crop/pad; image and mask move together."""
    side = sample.side
    image, mask = sample.image, sample.mask
    if flip:
        image = image[:, :, ::-1].copy()
        mask = mask[:, ::-1].copy()
    new_side = max(8, round(side * scale))
    if new_side != side:
        image, mask = _resize_pair(image, mask, new_side)
    if new_side >= side:
        image = image[:, oy:oy + side, ox:ox + side]
        mask = mask[oy:oy + side, ox:ox + side]
    else:
        canvas = np.tile(image.mean(axis=(1, 2)).reshape(3, 1, 1), (1, side, side)).astype(np.float32)
        mcanvas = np.zeros((side, side), dtype=np.uint8)
        canvas[:, oy:oy + new_side, ox:ox + new_side] = image
        mcanvas[oy:oy + new_side, ox:ox + new_side] = mask
        image, mask = canvas, mcanvas
    return Sample(np.ascontiguousarray(image), np.ascontiguousarray(mask),
                  sample.kind, float(mask.sum() / mask.size))


def augment(sample: Sample, rng: np.random.Generator) -> Sample:
    """Random flip, scale jitter in [0.75, 1.4], random crop back to size.

    Redraws until the target survives the crop (up to 8 tries), falling
    back to the untouched sample.
    """
    side = sample.side
    for _ in range(8):
        flip = bool(rng.random() < 0.5)
        scale = float(rng.uniform(0.75, 1.4))
        new_side = max(8, round(side * scale))
        span = abs(new_side - side)
        ox = int(rng.integers(0, span + 1))
        oy = int(rng.integers(0, span + 1))
        out = apply_augment(sample, flip, scale, ox, oy)
        if out.mask.sum() >= 9:
            return out
    return sample


# ---------------------------------------------------------------------------
# on-disk format (single .npz per dataset)


def save_dataset(samples: list[Sample], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        images=np.stack([np.round(s.image * 255).astype(np.uint8) for s in samples]),
        masks=np.stack([s.mask for s in samples]),
        kinds=np.array([s.kind for s in samples]),
        ratios=np.array([s.scale_ratio for s in samples], dtype=np.float64),
    )


def load_dataset(path) -> list[Sample]:
    with np.load(path, allow_pickle=False) as z:
        images = z["images"].astype(np.float32) / 255.0
        masks = z["masks"].astype(np.uint8)
        kinds = [str(k) for k in z["kinds"]]
        ratios = z["ratios"]
    return [Sample(images[i], masks[i], kinds[i], float(ratios[i])) for i in range(len(kinds))]
