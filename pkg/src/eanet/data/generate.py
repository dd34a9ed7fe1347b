"""Procedural scene sampling.

Every sample is generated from its own seed sequence derived from (base
seed, split id, index), so datasets are reproducible record by record and
splits never share streams. The right hand's pose blends between a mirror
image of the left and an independent draw, controlled by the symmetry
strength, which makes near-symmetric two-hand scenes easy to produce on
purpose.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigError
from ..hand import default_template, mirror_pose, sample_pose, sample_shape, skin_mesh
from .scene import Camera, HandRecord, Sample, make_aux, project_2_5d, rasterize

TRAIN_SPLIT = 0
VAL_SPLIT = 1

_LEFT_ROOT_LO = np.array([-0.10, -0.04, -0.03])
_LEFT_ROOT_HI = np.array([-0.02, 0.04, 0.03])
_REL_LO = np.array([0.05, -0.04, -0.03])
_REL_HI = np.array([0.11, 0.04, 0.03])


@dataclass
class GenConfig:
    train_samples: int = 256
    val_samples: int = 64
    seed: int = 0
    image_size: int = 64
    heat_size: int = 4
    depth_bins: int = 8
    depth_range: float = 0.12
    two_hand_ratio: float = 0.75
    symmetry: float = 0.0
    camera_scale: tuple = (100.0, 130.0)
    camera_offset: tuple = (28.0, 36.0)

    def __post_init__(self):
        for name in ("camera_scale", "camera_offset"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 2 or value[0] > value[1]:
                raise ConfigError(f"{name} wants an ordered (low, high) pair")
            object.__setattr__(self, name, value)
        if self.camera_scale[0] <= 0:
            raise ConfigError("camera_scale wants positive values")
        if not 0.0 <= self.two_hand_ratio <= 1.0:
            raise ConfigError("two_hand_ratio wants a value in [0, 1]")
        if not 0.0 <= self.symmetry <= 1.0:
            raise ConfigError("symmetry wants a value in [0, 1]")
        if self.train_samples < 0 or self.val_samples < 0:
            raise ConfigError("sample counts want non-negative values")
        for name in ("image_size", "heat_size", "depth_bins"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} wants a positive value")
        if self.depth_range <= 0:
            raise ConfigError("depth_range wants a positive value")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown generation config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse generation config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"generation config {path} wants a JSON object")
        return cls.from_dict(data)


def _empty_hand():
    return HandRecord(np.zeros((21, 3)), np.zeros((64, 3)), np.zeros(48), np.zeros(10))


def _place_mesh(template, theta, beta, handedness, root):
    mesh = skin_mesh(template, theta, beta, handedness)
    wrist = mesh.joints.data[0]
    # subtract before adding so the wrist lands on the root bitwise
    return (mesh.vertices.data - wrist) + root, (mesh.joints.data - wrist) + root


def sample_scene(cfg: GenConfig, rng, template=None) -> Sample:
    """Draw one scene and render it."""
    template = template if template is not None else default_template()
    scale_lo, scale_hi = cfg.camera_scale
    offset_lo, offset_hi = cfg.camera_offset
    camera = Camera(
        scale_x=rng.uniform(scale_lo, scale_hi),
        scale_y=rng.uniform(scale_lo, scale_hi),
        offset_x=rng.uniform(offset_lo, offset_hi),
        offset_y=rng.uniform(offset_lo, offset_hi),
    )
    if rng.uniform() < cfg.two_hand_ratio:
        flags = np.array([1.0, 1.0])
    else:
        flags = np.array([1.0, 0.0]) if rng.uniform() < 0.5 else np.array([0.0, 1.0])

    # left-hand parameters are drawn even for right-only scenes so the
    # symmetry blend and the record stream stay simple
    theta_left = sample_pose(template, rng, handedness="left")
    beta_left = sample_shape(rng)
    theta_ind = sample_pose(template, rng, handedness="right")
    beta_ind = sample_shape(rng)
    s = cfg.symmetry
    theta_right = s * mirror_pose(theta_left) + (1.0 - s) * theta_ind
    beta_right = s * beta_left + (1.0 - s) * beta_ind

    left_root = rng.uniform(_LEFT_ROOT_LO, _LEFT_ROOT_HI)
    rel = rng.uniform(_REL_LO, _REL_HI)
    if flags[0] and flags[1]:
        right_root = left_root + rel
    elif flags[1]:
        # right-only scenes sit on the positive-x side on their own
        right_root = rng.uniform(-_LEFT_ROOT_HI, -_LEFT_ROOT_LO)
        rel = np.zeros(3)
    else:
        right_root = np.zeros(3)
        rel = np.zeros(3)
    if not flags[0]:
        left_root = np.zeros(3)

    hands = {"left": _empty_hand(), "right": _empty_hand()}
    splats = []
    for i, (hand, theta, beta, root) in enumerate(
        (("left", theta_left, beta_left, left_root), ("right", theta_right, beta_right, right_root))
    ):
        if not flags[i]:
            continue
        verts, joints = _place_mesh(template, theta, beta, hand, root)
        coords, _ = project_2_5d(
            joints, camera, root, cfg.image_size, cfg.heat_size, cfg.depth_bins, cfg.depth_range
        )
        hands[hand] = HandRecord(coords, verts, theta.copy(), beta.copy())
        splats.append((i, verts, root[2]))

    image = rasterize(cfg.image_size, camera, splats, cfg.depth_range)
    aux = make_aux(camera, cfg.depth_range, cfg.heat_size, cfg.depth_bins, left_root, right_root)
    return Sample(image, flags, rel, aux, hands["left"], hands["right"])


def sample_rng(base_seed, split, index):
    return np.random.default_rng(np.random.SeedSequence([base_seed, split, index]))


def generate_samples(cfg: GenConfig, split, count, template=None):
    template = template if template is not None else default_template()
    return [sample_scene(cfg, sample_rng(cfg.seed, split, i), template) for i in range(count)]


def loss_targets(sample: Sample):
    """Repackage a record as the target dict the network loss consumes."""
    out = {"flags": sample.flags, "rel": sample.rel}
    for hand in ("left", "right"):
        rec = getattr(sample, hand)
        out[hand] = {
            "theta": rec.theta,
            "beta": rec.beta,
            "joints25": rec.joints25,
            "verts_rel": rec.vertices - sample.root(hand),
        }
    return out
