"""Dump token-selection decisions as PNG overlays and a CSV table."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image

from .model import ForwardResult

_SCALE_COLORS = {"tiny": (60, 220, 60), "large": (240, 150, 40)}


def _overlay(image: np.ndarray, patch: int, indices: np.ndarray, color) -> Image.Image:
    """Shade the selected patch cells of one scale on top of the image."""
    side = image.shape[1]
    grid = side // patch
    rgb = (np.clip(image, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0).copy()
    shade = np.zeros((side, side), dtype=bool)
    for idx in indices:
        gy, gx = divmod(int(idx), grid)
        shade[gy * patch:(gy + 1) * patch, gx * patch:(gx + 1) * patch] = True
    for c in range(3):
        chan = rgb[:, :, c].astype(np.int32)
        chan[shade] = (chan[shade] * 0.45 + color[c] * 0.55).astype(np.int32)
        rgb[:, :, c] = np.clip(chan, 0, 255).astype(np.uint8)
    return Image.fromarray(rgb)


def dump_selection_debug(out_dir, image: np.ndarray, result: ForwardResult) -> list[Path]:
    """Write per-block selection overlays (PNG) and one CSV of decisions.

    Returns the written paths. Blocks that never built a kernel (no
    positive clicks) are skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    csv_path = out_dir / "selection.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["block", "scale", "chosen", "token_index", "score"])
        for rec in result.records:
            if not rec.active:
                continue
            for sel in rec.selections.values():
                png = out_dir / f"block{rec.block_index}_{sel.scale}.png"
                _overlay(image, sel.patch, sel.indices, _SCALE_COLORS[sel.scale]).save(png)
                written.append(png)
                for idx, score in zip(sel.indices, sel.topk_scores.data):
                    writer.writerow([rec.block_index, sel.scale,
                                     int(sel.scale == rec.chosen), int(idx), f"{float(score):.6f}"])
    written.append(csv_path)
    return written
