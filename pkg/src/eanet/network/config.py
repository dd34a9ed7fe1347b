"""Model configuration with validation and JSON round trips."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError

BLOCK_KINDS = ("fuseformer", "sa_only", "ca_only")
CA_VARIANTS = ("tj_ts", "tj_tj", "ts_ts", "ts_tj", "tj_feats", "none")


@dataclass
class ModelConfig:
    """Hyperparameters for the two-hand mesh recovery network.

    The defaults describe the desk-scale model: 64 px input, a three-layer
    strided encoder down to a 4x4 grid, and 32-channel hand feature maps.
    """

    image_size: int = 64
    encoder_channels: tuple = (16, 32, 128)
    encoder_strides: tuple = (4, 2, 2)
    encoder_kernel: int = 3
    light: bool = False
    depth_bins: int = 8
    num_joints: int = 21
    mlp_ratio: int = 4
    adaptation_stages: int = 1
    block_kind: str = "fuseformer"
    ca_variant: str = "tj_ts"
    pose_hidden: int = 128
    lambda_pose: float = 1.0
    lambda_shape: float = 0.2
    lambda_joint: float = 1.0
    lambda_vert: float = 10.0
    lambda_rel: float = 1.0
    diagnostics: bool = False

    def __post_init__(self):
        self.encoder_channels = tuple(int(x) for x in self.encoder_channels)
        self.encoder_strides = tuple(int(x) for x in self.encoder_strides)
        if len(self.encoder_channels) != len(self.encoder_strides):
            raise ConfigError("encoder_channels and encoder_strides want equal lengths")
        if not self.encoder_channels:
            raise ConfigError("encoder wants at least one layer")
        if self.block_kind not in BLOCK_KINDS:
            raise ConfigError(f"block_kind {self.block_kind!r} not one of {BLOCK_KINDS}")
        if self.ca_variant not in CA_VARIANTS:
            raise ConfigError(f"ca_variant {self.ca_variant!r} not one of {CA_VARIANTS}")
        stride_product = math.prod(self.encoder_strides)
        if self.image_size % stride_product != 0:
            raise ConfigError(
                f"image_size {self.image_size} not divisible by stride product {stride_product}"
            )
        divisor = 8 if self.light else 4
        if self.encoder_channels[-1] % divisor != 0:
            raise ConfigError(
                f"last encoder channel {self.encoder_channels[-1]} not divisible by {divisor}"
            )
        if self.hand_channels % 4 != 0:
            raise ConfigError(f"hand feature width {self.hand_channels} not divisible by 4")
        for name in ("image_size", "depth_bins", "num_joints", "mlp_ratio", "pose_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} wants a positive value")
        if self.adaptation_stages < 0:
            raise ConfigError("adaptation_stages wants a non-negative value")

    @property
    def hand_channels(self):
        """Width of each per-hand feature map produced by the split heads."""
        return self.encoder_channels[-1] // (8 if self.light else 4)

    @property
    def grid_size(self):
        """Spatial extent of the encoder output (square)."""
        return self.image_size // math.prod(self.encoder_strides)

    @property
    def fused_channels(self):
        """Width after a block appends its reduced interaction features."""
        return self.hand_channels + self.hand_channels // 4

    @property
    def token_count(self):
        """Rows in the concatenated token sequence: both grids plus a class row."""
        return 2 * self.grid_size * self.grid_size + 1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)
