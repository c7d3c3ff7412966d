"""Click bookkeeping and rasterization into model input channels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError


@dataclass(frozen=True)
class Click:
    x: int
    y: int
    positive: bool


@dataclass
class ClickState:
    """Ordered clicks plus the previous predicted mask (probabilities)."""

    clicks: list[Click] = field(default_factory=list)
    prev_mask: np.ndarray | None = None  # [H, W] in [0, 1]; zeros initially

    def add(self, x: int, y: int, positive: bool) -> "ClickState":
        self.clicks.append(Click(int(x), int(y), bool(positive)))
        return self

    def positives(self) -> list[Click]:
        return [c for c in self.clicks if c.positive]

    def negatives(self) -> list[Click]:
        return [c for c in self.clicks if not c.positive]

    def copy(self) -> "ClickState":
        return ClickState(list(self.clicks), None if self.prev_mask is None else self.prev_mask.copy())


def click_radius(side: int) -> int:
    """Disk radius scaled with resolution: 5 px at 448, at least 1."""
    return max(1, round(5 * side / 448))


def encode_clicks(clicks: list[Click], h: int, w: int, radius: int) -> np.ndarray:
    """[2, h, w] binary maps: channel 0 positive disks, channel 1 negative.

    Overlapping disks stay binary (union, not sum). Out-of-bounds click
    centers are a caller bug.
    """
    maps = np.zeros((2, h, w), dtype=np.float32)
    for c in clicks:
        if not (0 <= c.x < w and 0 <= c.y < h):
            raise ContractError(f"click ({c.x}, {c.y}) outside {w}x{h} image")
        y0, y1 = max(0, c.y - radius), min(h, c.y + radius + 1)
        x0, x1 = max(0, c.x - radius), min(w, c.x + radius + 1)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        disk = (yy - c.y) ** 2 + (xx - c.x) ** 2 <= radius * radius
        channel = 0 if c.positive else 1
        maps[channel, y0:y1, x0:x1][disk] = 1.0
    return maps


def model_input(image: np.ndarray, state: ClickState, radius: int) -> np.ndarray:
    """Stack [3+2+1, H, W]: image, click maps, previous mask."""
    _, h, w = image.shape
    maps = encode_clicks(state.clicks, h, w, radius)
    prev = state.prev_mask
    if prev is None:
        prev = np.zeros((h, w), dtype=np.float32)
    return np.concatenate([image.astype(np.float32, copy=False), maps,
                           prev.astype(np.float32, copy=False)[None]], axis=0)
