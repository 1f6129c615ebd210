from .model import UNetConfig, UNetModel, unet_init, unet_forward, unet_backward
from .patches import PatchSet, extract_patches, stitch_patches
from .ops import masked_cross_entropy, softmax
from .train import (
    load_unet,
    predict_scene,
    save_unet,
    train_unet,
    write_loss_history,
)

__all__ = [
    "UNetConfig", "UNetModel", "unet_init", "unet_forward", "unet_backward",
    "PatchSet", "extract_patches", "stitch_patches",
    "masked_cross_entropy", "softmax",
    "train_unet", "predict_scene", "save_unet", "load_unet", "write_loss_history",
]
