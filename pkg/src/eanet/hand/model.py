"""Differentiable hand kinematics: shape blending, FK, skinning, mirroring.

All geometry passes through the autodiff tensor engine, so gradients with
respect to pose and shape parameters fall out of ``backward``. Ground-truth
generation calls the same code with constant tensors, which records no graph.

Conventions:

* 48 pose values are 16 axis-angle triples, triple 0 rotating the whole hand
  rigidly about the wrist (there is no translation inside a hand).
* The canonical template is a right hand. A left hand stores its parameters
  in left-hand convention: skinning mirrors the pose into right-hand
  convention, poses the canonical template, and reflects the result through
  the yz plane.
* At exactly zero pose and shape, FK returns the rest joints bitwise. The
  rotation composition is written in delta form (displacements relative to
  rest) to make that hold without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, as_tensor, concat, matmul, narrow, reshape, take_rows, transpose
from ..errors import ShapeError
from .template import (
    MIRROR_MASK,
    N_BONES,
    N_JOINTS,
    POSE_DIM,
    SHAPE_DIM,
    HandTemplate,
)

_FLIP_X = np.array([-1.0, 1.0, 1.0])
_EYE3 = np.eye(3).reshape(1, 3, 3)


@dataclass
class HandPose:
    """Pose/shape parameters for one hand, in that hand's own convention."""

    theta: np.ndarray      # (48,)
    beta: np.ndarray       # (10,)
    handedness: str        # "left" | "right"

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.theta.shape != (POSE_DIM,):
            raise ShapeError(f"pose wants {POSE_DIM} values, got {self.theta.shape}")
        if self.beta.shape != (SHAPE_DIM,):
            raise ShapeError(f"shape wants {SHAPE_DIM} values, got {self.beta.shape}")
        if self.handedness not in ("left", "right"):
            raise ShapeError(f"handedness must be left or right, got {self.handedness!r}")


@dataclass
class HandMesh:
    """Posed hand geometry in hand-local meters. Tensors so gradients flow."""

    vertices: Tensor       # (V, 3)
    joints: Tensor         # (21, 3)
    handedness: str


def mirror_pose(theta):
    """Map a pose between left and right conventions. Involution, elementwise exact."""
    t = as_tensor(theta) if isinstance(theta, Tensor) else None
    if t is not None:
        return t * Tensor(MIRROR_MASK)
    return np.asarray(theta, dtype=np.float64) * MIRROR_MASK


def rodrigues(omega):
    """Batched axis-angle to rotation matrices: (n, 3) -> (n, 3, 3).

    Uses the unnormalized form R = I + A K + B K^2 with K the cross-product
    matrix of the raw vector, A = sin(t)/t and B = (1 - cos(t))/t^2. The tiny
    bias inside the square root keeps the quotients finite at t = 0, where
    K = 0 makes R the exact identity regardless of A and B.
    """
    omega = as_tensor(omega)
    if omega.ndim != 2 or omega.shape[1] != 3:
        raise ShapeError(f"rodrigues expects (n, 3), got {omega.shape}")
    n = omega.shape[0]
    sq = (omega * omega).sum(axis=1, keepdims=True)          # (n, 1) squared angle
    angle = (sq + 1e-40).sqrt()
    a = angle.sin() / angle
    b = (1.0 - angle.cos()) / (sq + 1e-40)
    wx = narrow(omega, 1, 0, 1)
    wy = narrow(omega, 1, 1, 1)
    wz = narrow(omega, 1, 2, 1)
    zero = wx * 0.0
    k = reshape(concat([zero, -wz, wy, wz, zero, -wx, -wy, wx, zero], axis=1), (n, 3, 3))
    k2 = matmul(k, k)
    return Tensor(_EYE3) + reshape(a, (n, 1, 1)) * k + reshape(b, (n, 1, 1)) * k2


def shaped_vertices(template: HandTemplate, beta):
    """Template vertices displaced along the shape blend directions."""
    beta = as_tensor(beta)
    if beta.shape != (SHAPE_DIM,):
        raise ShapeError(f"beta wants shape ({SHAPE_DIM},), got {beta.shape}")
    v = template.template_vertices
    blends = Tensor(template.blend_dirs.reshape(SHAPE_DIM, -1))
    offset = matmul(reshape(beta, (1, SHAPE_DIM)), blends)
    return Tensor(v) + reshape(offset, v.shape)


def _world_rotations(template: HandTemplate, theta):
    omegas = reshape(as_tensor(theta), (N_BONES, 3))
    local = rodrigues(omegas)                                 # (16, 3, 3)
    world = [None] * N_BONES
    for b in range(N_BONES):
        rb = reshape(narrow(local, 0, b, 1), (3, 3))
        parent = template.bone_parent[b]
        world[b] = rb if parent < 0 else matmul(world[parent], rb)
    stacked = concat([reshape(w, (1, 3, 3)) for w in world], axis=0)
    return stacked, world


def forward_kinematics(template: HandTemplate, theta, beta):
    """Joint positions for a pose in canonical (right-hand) convention.

    Returns (joints (21, 3), world bone rotations (16, 3, 3), shaped rest
    joints (21, 3)). Joints are built as rest + accumulated displacement, so
    a zero pose yields the shaped rest joints exactly.
    """
    theta = as_tensor(theta)
    if theta.shape != (POSE_DIM,):
        raise ShapeError(f"theta wants shape ({POSE_DIM},), got {theta.shape}")
    verts_s = shaped_vertices(template, beta)
    rest = matmul(Tensor(template.joint_regressor), verts_s)  # (21, 3)
    world, world_list = _world_rotations(template, theta)

    deltas = [None] * N_JOINTS
    deltas[0] = Tensor(np.zeros((1, 3)))
    for j in range(1, N_JOINTS):
        p = int(template.joint_parent[j])
        bone = int(template.bone_at_joint[p])
        seg = narrow(rest, 0, j, 1) - narrow(rest, 0, p, 1)
        moved = matmul(seg, transpose(world_list[bone])) - seg
        deltas[j] = deltas[p] + moved
    joints = rest + concat(deltas, axis=0)
    return joints, world, rest


def skin_mesh(template: HandTemplate, pose_or_theta, beta=None, handedness=None):
    """Pose the template with linear blend skinning.

    Accepts either a ``HandPose`` or explicit (theta, beta, handedness)
    tensors; the latter keeps a gradient path from network predictions.
    """
    if isinstance(pose_or_theta, HandPose):
        theta, beta, handedness = pose_or_theta.theta, pose_or_theta.beta, pose_or_theta.handedness
    else:
        theta = pose_or_theta
        if beta is None or handedness is None:
            raise ShapeError("skin_mesh needs beta and handedness alongside raw theta")
    if handedness not in ("left", "right"):
        raise ShapeError(f"handedness must be left or right, got {handedness!r}")
    side = handedness
    theta = as_tensor(theta)
    if side == "left":
        theta = mirror_pose(theta)

    verts_s = shaped_vertices(template, beta)
    rest = matmul(Tensor(template.joint_regressor), verts_s)
    world, world_list = _world_rotations(template, theta)

    deltas = [Tensor(np.zeros((1, 3)))] + [None] * (N_JOINTS - 1)
    for j in range(1, N_JOINTS):
        p = int(template.joint_parent[j])
        bone = int(template.bone_at_joint[p])
        seg = narrow(rest, 0, j, 1) - narrow(rest, 0, p, 1)
        deltas[j] = deltas[p] + matmul(seg, transpose(world_list[bone])) - seg
    joints = rest + concat(deltas, axis=0)

    pivots = take_rows(rest, template.bone_pivot_joint)       # (16, 3)
    pivots_world = take_rows(joints, template.bone_pivot_joint)
    v = template.n_vertices
    local = reshape(verts_s, (1, v, 3)) - reshape(pivots, (N_BONES, 1, 3))
    rotated = matmul(local, transpose(world))                 # (16, V, 3)
    placed = rotated + reshape(pivots_world, (N_BONES, 1, 3))
    weights = Tensor(np.ascontiguousarray(template.skin_weights.T).reshape(N_BONES, v, 1))
    vertices = (placed * weights).sum(axis=0)

    if side == "left":
        flip = Tensor(_FLIP_X)
        vertices = vertices * flip
        joints = joints * flip
    return HandMesh(vertices=vertices, joints=joints, handedness=side)


def regress_joints(template: HandTemplate, vertices):
    """Joint positions as the fixed non-negative convex combination of vertices."""
    vertices = as_tensor(vertices)
    if vertices.shape != (template.n_vertices, 3):
        raise ShapeError(f"regress_joints wants ({template.n_vertices}, 3), got {vertices.shape}")
    return matmul(Tensor(template.joint_regressor), vertices)


def flip_hand(mesh: HandMesh):
    """Reflect a mesh through the yz plane and toggle handedness. Involution."""
    flip = Tensor(_FLIP_X)
    return HandMesh(
        vertices=mesh.vertices * flip,
        joints=mesh.joints * flip,
        handedness="left" if mesh.handedness == "right" else "right",
    )


def sample_pose(template: HandTemplate, rng, handedness="right"):
    """Uniform pose draw inside the per-axis limits, in the given convention."""
    lo = template.pose_limits[:, 0]
    hi = template.pose_limits[:, 1]
    theta = rng.uniform(lo, hi)
    if handedness == "left":
        theta = theta * MIRROR_MASK
    return theta


def sample_shape(rng):
    return rng.uniform(-1.0, 1.0, size=SHAPE_DIM)


def write_obj(path, mesh: HandMesh, template: HandTemplate):
    """Plain OBJ: one ``v`` line per vertex, one ``f`` line per triangle."""
    verts = mesh.vertices.data if isinstance(mesh.vertices, Tensor) else np.asarray(mesh.vertices)
    with open(path, "w") as fh:
        fh.write(f"# hand mesh ({mesh.handedness}), {verts.shape[0]} vertices\n")
        for x, y, z in verts:
            fh.write(f"v {x:.10g} {y:.10g} {z:.10g}\n")
        for a, b, c in template.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
