"""Click-driven interactive segmentation with multi-scale token selection."""

from .clicks import Click, ClickState, click_radius, encode_clicks
from .config import ModelConfig, TrainConfig, desk_config, desk_train_config
from .model import Segmenter
from .tensor import Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "Click",
    "ClickState",
    "ModelConfig",
    "Segmenter",
    "Tape",
    "Tensor",
    "TrainConfig",
    "backward",
    "click_radius",
    "desk_config",
    "desk_train_config",
    "encode_clicks",
    "__version__",
]
