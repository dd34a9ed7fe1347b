"""Two-hand mesh recovery network.

A strided convolutional encoder maps the image to a coarse grid, two 1x1
convolutions split it into per-hand feature maps, and the interaction block
fuses them. Each hand then gets: a per-cell depth-binned heatmap whose
soft-argmax yields 2.5D joint coordinates, features sampled at those
joints and refined by self-attention, and FC heads regressing articulation
and shape parameters. A relative-translation head works off both hands'
pooled features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import (
    Tensor,
    attention_block,
    concat,
    conv1x1,
    conv2d,
    global_average_pool,
    l1_loss,
    linear,
    narrow,
    reshape,
    sample_at_joints,
    soft_argmax_2_5d,
)
from ..errors import ShapeError
from ..hand import skin_mesh
from ..hand.template import POSE_DIM, SHAPE_DIM
from .blocks import block_forward, init_attention, init_block, init_linear
from .config import ModelConfig

HANDS = ("left", "right")


@dataclass
class HandBranch:
    """Per-hand network outputs, all still attached to the graph."""

    theta: Tensor          # (48,) axis-angle articulation
    beta: Tensor           # (10,) shape coefficients
    coords: Tensor         # (J, 3) grid-unit x, y and depth-bin z
    joint_feats: Tensor    # (J, fused_channels) refined joint tokens
    fused_map: Tensor      # (h, w, fused_channels)


@dataclass
class NetOutputs:
    left: HandBranch
    right: HandBranch
    rel: Tensor            # (3,) right wrist minus left wrist, meters
    tokens: dict | None = field(default=None)  # extraction-stage diagnostics


class EANet:
    """The full network: parameter store plus a pure-functional forward."""

    def __init__(self, config: ModelConfig = None, seed: int = 0, params=None):
        self.config = config if config is not None else ModelConfig()
        self.params = {}
        self._init_params(np.random.default_rng(seed))
        if params is not None:
            self.load_params(params)

    def _init_params(self, rng):
        cfg = self.config
        p = self.params
        c_in = 3
        for i, (c_out, stride) in enumerate(zip(cfg.encoder_channels, cfg.encoder_strides)):
            k = cfg.encoder_kernel
            std = np.sqrt(2.0 / (k * k * c_in))
            p[f"encoder.{i}.w"] = Tensor(rng.normal(0.0, std, size=(k, k, c_in, c_out)), requires_grad=True)
            p[f"encoder.{i}.b"] = Tensor(np.zeros(c_out), requires_grad=True)
            c_in = c_out
        c = cfg.hand_channels
        for hand in HANDS:
            init_linear(p, f"split.{hand}", c_in, c, rng)
        init_block(p, "block", cfg, rng)
        cf = cfg.fused_channels
        for hand in HANDS:
            init_linear(p, f"heat.{hand}", cf, cfg.depth_bins * cfg.num_joints, rng)
            init_attention(p, f"joints.{hand}", cf, cfg.mlp_ratio * cf, rng)
            init_linear(p, f"pose.{hand}.hidden", cfg.num_joints * (cf + 3), cfg.pose_hidden, rng)
            init_linear(p, f"pose.{hand}.out", cfg.pose_hidden, POSE_DIM, rng)
            init_linear(p, f"shape.{hand}", cf, SHAPE_DIM, rng)
        init_linear(p, "rel", 2 * cf, 3, rng)

    # -- parameter plumbing --------------------------------------------------

    def load_params(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ShapeError(f"parameter names mismatch: missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]}")
        for name, tensor in self.params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.shape:
                raise ShapeError(f"parameter {name} wants shape {tensor.shape}, got {arr.shape}")
            tensor.data[...] = arr

    def param_arrays(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def param_count(self):
        return sum(t.data.size for t in self.params.values())

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    # -- forward -------------------------------------------------------------

    def forward(self, image) -> NetOutputs:
        cfg = self.config
        if not isinstance(image, Tensor):
            image = Tensor(np.asarray(image, dtype=np.float64))
        if image.shape != (cfg.image_size, cfg.image_size, 3):
            raise ShapeError(
                f"image wants shape ({cfg.image_size}, {cfg.image_size}, 3), got {image.shape}"
            )
        p = self.params
        x = image
        for i, stride in enumerate(cfg.encoder_strides):
            x = conv2d(x, p[f"encoder.{i}.w"], p[f"encoder.{i}.b"], stride=stride, padding=1).gelu()
        f_left = conv1x1(x, p["split.left.w"], p["split.left.b"])
        f_right = conv1x1(x, p["split.right.w"], p["split.right.b"])
        out_l, out_r, diag = block_forward(p, "block", f_left, f_right, cfg)

        branches = {}
        pooled = {}
        for hand, fused in (("left", out_l), ("right", out_r)):
            h, w, cf = fused.shape
            logits = conv1x1(fused, p[f"heat.{hand}.w"], p[f"heat.{hand}.b"])
            logits = reshape(logits, (h, w, cfg.depth_bins, cfg.num_joints))
            coords = soft_argmax_2_5d(logits)
            feats = sample_at_joints(fused, narrow(coords, 1, 0, 2))
            tokens, _ = attention_block(feats, p, f"joints.{hand}")
            flat = reshape(concat([tokens, coords], axis=1), (cfg.num_joints * (cf + 3),))
            hidden = linear(flat, p[f"pose.{hand}.hidden.w"], p[f"pose.{hand}.hidden.b"]).gelu()
            theta = linear(hidden, p[f"pose.{hand}.out.w"], p[f"pose.{hand}.out.b"])
            pooled[hand] = global_average_pool(fused)
            beta = linear(pooled[hand], p[f"shape.{hand}.w"], p[f"shape.{hand}.b"])
            branches[hand] = HandBranch(theta, beta, coords, tokens, fused)
        rel = linear(concat([pooled["left"], pooled["right"]], axis=0), p["rel.w"], p["rel.b"])
        tokens_out = diag if cfg.diagnostics else None
        return NetOutputs(branches["left"], branches["right"], rel, tokens_out)

    # -- loss ----------------------------------------------------------------

    def compute_loss(self, outputs: NetOutputs, targets, template):
        """Weighted L1 losses against one sample's targets.

        targets is a dict: "flags" (2,), "rel" (3,), and per hand name a
        dict with "theta" (48,), "beta" (10,), "joints25" (J, 3) in grid
        units, "verts_rel" (V, 3) wrist-relative meters. Loss terms for an
        absent hand are skipped; the relative-translation term needs both.
        Returns (total loss tensor, dict of detached part values).
        """
        cfg = self.config
        parts = {}
        total = None
        for i, hand in enumerate(HANDS):
            if not targets["flags"][i]:
                continue
            branch = getattr(outputs, hand)
            t = targets[hand]
            mesh = skin_mesh(template, branch.theta, branch.beta, hand)
            verts_rel = mesh.vertices - narrow(mesh.joints, 0, 0, 1)
            terms = {
                f"pose_{hand}": l1_loss(branch.theta, t["theta"]) * cfg.lambda_pose,
                f"shape_{hand}": l1_loss(branch.beta, t["beta"]) * cfg.lambda_shape,
                f"joint_{hand}": l1_loss(branch.coords, t["joints25"]) * cfg.lambda_joint,
                f"vert_{hand}": l1_loss(verts_rel, t["verts_rel"]) * cfg.lambda_vert,
            }
            for name, term in terms.items():
                parts[name] = term.item()
                total = term if total is None else total + term
        if targets["flags"][0] and targets["flags"][1]:
            term = l1_loss(outputs.rel, targets["rel"]) * cfg.lambda_rel
            parts["rel"] = term.item()
            total = term if total is None else total + term
        if total is None:
            raise ShapeError("sample flags mark no hand present")
        parts["total"] = total.item()
        return total, parts
