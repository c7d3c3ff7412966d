"""Model and training configuration."""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Geometry and capacity of the segmenter.

    ``side`` is the square input resolution and must be divisible by
    every patch size. 112 is the small CPU-friendly setting; 448 matches
    the full-scale setting and is configuration-only here.
    """

    side: int = 112
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    patch_sizes: tuple[int, ...] = (8, 16, 28)
    base_patch: int = 16
    fusion_blocks: tuple[int, ...] = (1, 3)
    k_divisor: int = 12
    n_cls: int = 1
    mlp_ratio: int = 4
    pool_ratio: int = 7  # scaled cross-attention downsampling of the base grid
    fpn_dim: int | None = None  # defaults to embed_dim // 2

    def __post_init__(self):
        for p in self.patch_sizes:
            if self.side % p:
                raise ConfigError(f"side {self.side} not divisible by patch size {p}")
        if self.base_patch not in self.patch_sizes:
            raise ConfigError(f"base patch {self.base_patch} missing from patch sizes {self.patch_sizes}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed dim {self.embed_dim} not divisible by {self.heads} heads")
        for i in self.fusion_blocks:
            if not (0 <= i < self.depth):
                raise ConfigError(f"fusion block index {i} outside [0, {self.depth})")
        base_grid = self.side // self.base_patch
        if base_grid % self.pool_ratio:
            raise ConfigError(f"pool ratio {self.pool_ratio} does not divide base grid {base_grid}")
        if self.n_cls != 1:
            raise ConfigError("only single-class masks are supported")
        if self.fpn_dim is None:
            self.fpn_dim = self.embed_dim // 2

    def grid(self, p: int) -> int:
        return self.side // p

    def token_count(self, p: int) -> int:
        g = self.grid(p)
        return g * g

    def aux_patch_sizes(self) -> tuple[int, ...]:
        return tuple(p for p in self.patch_sizes if p != self.base_patch)

    def topk_count(self, p: int) -> int:
        """floor(L_p / k_divisor), at least one token."""
        return max(1, self.token_count(p) // self.k_divisor)

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "embed_dim": self.embed_dim,
            "depth": self.depth,
            "heads": self.heads,
            "patch_sizes": list(self.patch_sizes),
            "base_patch": self.base_patch,
            "fusion_blocks": list(self.fusion_blocks),
            "k_divisor": self.k_divisor,
            "n_cls": self.n_cls,
            "mlp_ratio": self.mlp_ratio,
            "pool_ratio": self.pool_ratio,
            "fpn_dim": self.fpn_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("patch_sizes", "fusion_blocks"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def desk_config(**overrides) -> ModelConfig:
    """Small configuration that trains on a laptop CPU."""
    return ModelConfig(**overrides)


def paper_scale_config(**overrides) -> ModelConfig:
    """Full-scale geometry (448 input, ViT-B-like capacity). Not a test target."""
    base = dict(side=448, embed_dim=768, depth=12, heads=12,
                fusion_blocks=(3, 7, 11), pool_ratio=2)
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class TrainConfig:
    """Knobs for the iterative-click training loop."""

    side: int = 112
    epochs: int = 20
    samples_per_epoch: int = 512
    batch_size: int = 8
    lr: float = 3e-4
    lr_drop_epochs: tuple[int, ...] = (12, 16)
    lr_drop_factor: float = 10.0
    weight_decay: float = 0.01
    max_train_clicks: int = 24
    click_decay: float = 0.8
    contrastive: bool = True
    max_pairs: int = 256
    fusion_enabled: bool = True
    seed: int = 0
    augment: bool = True
    focal_gamma: float = 2.0
    focal_alpha: float = 0.5  # balanced: under-segmenting costs as much as over-segmenting
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4

    def __post_init__(self):
        if not (0.0 < self.click_decay <= 1.0):
            raise ConfigError(f"click decay must be in (0, 1], got {self.click_decay}")
        self.lr_drop_epochs = tuple(sorted(self.lr_drop_epochs))

    def model_config(self) -> ModelConfig:
        fusion = (1, 3) if self.depth >= 4 else tuple(i for i in (self.depth - 1,) if i >= 0)
        if not self.fusion_enabled:
            fusion = ()
        return ModelConfig(side=self.side, embed_dim=self.embed_dim, depth=self.depth,
                           heads=self.heads, fusion_blocks=fusion)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def desk_train_config(**overrides) -> TrainConfig:
    return TrainConfig(**overrides)


def paper_scale_train_config(**overrides) -> TrainConfig:
    """Schedule used at full scale (230 epochs, 30k samples, lr 5e-6,
    drops at 50/70). Encoded for completeness; far beyond CPU budgets."""
    base = dict(side=448, epochs=230, samples_per_epoch=30000, lr=5e-6,
                lr_drop_epochs=(50, 70), embed_dim=768, depth=12, heads=12)
    base.update(overrides)
    return TrainConfig(**base)
