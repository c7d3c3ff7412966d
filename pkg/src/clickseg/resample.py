"""Linear spatial resampling as constant matrices.

Every resize/pool used in the model is a fixed linear map on a square
grid, materialized once as a [dst_cells, src_cells] matrix so that it
composes with the autodiff matmul. Matrices are cached per geometry.
"""

from __future__ import annotations

import numpy as np

_CACHE: dict[tuple, np.ndarray] = {}


def _bilinear_weights_1d(src: int, dst: int) -> np.ndarray:
    """[dst, src] row-stochastic interpolation weights, corner-aligned."""
    w = np.zeros((dst, src), dtype=np.float64)
    if dst == 1:
        w[0, :] = 0.0
        w[0, (src - 1) // 2] = 1.0 if src % 2 else 0.5
        if src % 2 == 0:
            w[0, src // 2] = 0.5
        return w
    for d in range(dst):
        s = d * (src - 1) / (dst - 1) if src > 1 else 0.0
        lo = int(np.floor(s))
        hi = min(lo + 1, src - 1)
        frac = s - lo
        w[d, lo] += 1.0 - frac
        if hi != lo:
            w[d, hi] += frac
    return w


def bilinear_matrix(src_side: int, dst_side: int, dtype=np.float32) -> np.ndarray:
    """[dst², src²] separable bilinear resize between square grids."""
    key = ("bilinear", src_side, dst_side, np.dtype(dtype).str)
    if key not in _CACHE:
        w1 = _bilinear_weights_1d(src_side, dst_side)
        m = np.einsum("ai,bj->abij", w1, w1).reshape(dst_side * dst_side, src_side * src_side)
        _CACHE[key] = np.ascontiguousarray(m, dtype=dtype)
    return _CACHE[key]


def avgpool_matrix(grid: int, ratio: int, dtype=np.float32) -> np.ndarray:
    """[(g/r)², g²] non-overlapping mean pooling; ratio must divide grid."""
    if grid % ratio:
        raise ValueError(f"pool ratio {ratio} does not divide grid {grid}")
    key = ("avgpool", grid, ratio, np.dtype(dtype).str)
    if key not in _CACHE:
        out = grid // ratio
        m = np.zeros((out * out, grid * grid), dtype=np.float64)
        inv = 1.0 / (ratio * ratio)
        for oy in range(out):
            for ox in range(out):
                for dy in range(ratio):
                    for dx in range(ratio):
                        m[oy * out + ox, (oy * ratio + dy) * grid + (ox * ratio + dx)] = inv
        _CACHE[key] = m.astype(dtype)
    return _CACHE[key]


def halfpool_matrix(grid: int, dtype=np.float32) -> np.ndarray:
    """[ceil(g/2)², g²] stride-2 mean pooling with partial edge windows."""
    key = ("halfpool", grid, np.dtype(dtype).str)
    if key not in _CACHE:
        out = (grid + 1) // 2
        m = np.zeros((out * out, grid * grid), dtype=np.float64)
        for oy in range(out):
            ys = [y for y in (2 * oy, 2 * oy + 1) if y < grid]
            for ox in range(out):
                xs = [x for x in (2 * ox, 2 * ox + 1) if x < grid]
                inv = 1.0 / (len(ys) * len(xs))
                for y in ys:
                    for x in xs:
                        m[oy * out + ox, y * grid + x] = inv
        _CACHE[key] = m.astype(dtype)
    return _CACHE[key]


def resize_plane(plane: np.ndarray, dst_side: int) -> np.ndarray:
    """Bilinear-resize a single [s, s] numpy plane to [dst, dst]."""
    src = plane.shape[0]
    m = bilinear_matrix(src, dst_side, dtype=plane.dtype if plane.dtype == np.float64 else np.float32)
    flat = plane.reshape(-1).astype(m.dtype, copy=False)
    return (m @ flat).reshape(dst_side, dst_side)
