"""Parametric hand: procedural template plus differentiable posing."""

from .model import (
    HandMesh,
    HandPose,
    flip_hand,
    forward_kinematics,
    mirror_pose,
    regress_joints,
    rodrigues,
    sample_pose,
    sample_shape,
    shaped_vertices,
    skin_mesh,
    write_obj,
)
from .template import (
    BONE_AT_JOINT,
    BONE_PARENT,
    BONE_PIVOT_JOINT,
    JOINT_PARENT,
    MIRROR_MASK,
    N_BONES,
    N_JOINTS,
    N_SHAPE,
    N_VERTICES,
    POSE_DIM,
    SHAPE_DIM,
    HandTemplate,
    default_template,
)

__all__ = [
    "BONE_AT_JOINT",
    "BONE_PARENT",
    "BONE_PIVOT_JOINT",
    "HandMesh",
    "HandPose",
    "HandTemplate",
    "JOINT_PARENT",
    "MIRROR_MASK",
    "N_BONES",
    "N_JOINTS",
    "N_SHAPE",
    "N_VERTICES",
    "POSE_DIM",
    "SHAPE_DIM",
    "default_template",
    "flip_hand",
    "forward_kinematics",
    "mirror_pose",
    "regress_joints",
    "rodrigues",
    "sample_pose",
    "sample_shape",
    "shaped_vertices",
    "skin_mesh",
    "write_obj",
]
