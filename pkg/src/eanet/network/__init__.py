from .blocks import (
    baseline_param_count,
    block_forward,
    block_param_count,
    fusion_forward,
    init_attention,
    init_block,
    init_fusion,
    init_linear,
    matched_hidden,
)
from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .config import BLOCK_KINDS, CA_VARIANTS, ModelConfig
from .model import EANet, HandBranch, NetOutputs

__all__ = [
    "BLOCK_KINDS",
    "CA_VARIANTS",
    "EANet",
    "HandBranch",
    "ModelConfig",
    "NetOutputs",
    "baseline_param_count",
    "block_forward",
    "block_param_count",
    "fusion_forward",
    "init_attention",
    "init_block",
    "init_fusion",
    "init_linear",
    "load_checkpoint",
    "load_model",
    "matched_hidden",
    "save_checkpoint",
]
