"""Tiny parameter-container base shared by the model pieces."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Module:
    """Holds Tensors and sub-Modules; walks them for checkpoints/optimizers."""

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.parameters(prefix=f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.parameters(prefix=f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{key}.{i}"] = item
        return out


def param(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float32) -> Tensor:
    """Truncated-normal initialized weight (clipped at 2 std)."""
    data = np.clip(rng.normal(0.0, std, size=shape), -2 * std, 2 * std)
    return Tensor(data.astype(dtype), requires_grad=True)


def zeros_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)
