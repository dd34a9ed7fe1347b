"""Procedural articulated hand template.

A compact stand-in for a scanned parametric hand: 21 joints (wrist plus five
digits of MCP/PIP/DIP/TIP), 16 skinning transforms (one global at the wrist,
three articulated per digit; fingertips ride their DIP bone), 64 template
vertices arranged as a triangle ring around every joint plus one palm vertex,
10 shape blend directions, and a joint regression matrix.

Construction invariants, by design rather than by luck:

* skinning weight rows and regressor rows are exactly row-stochastic
  (dyadic weights, so the float sums are exact),
* the stored rest joints are literally ``joint_regressor @ template_vertices``,
  so regressing the template recovers the rest skeleton bitwise.

Everything is deterministic; there is no randomness in the template.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_JOINTS = 21
N_BONES = 16
N_VERTICES = 64
N_SHAPE = 10
POSE_DIM = 48  # 16 axis-angle triples
SHAPE_DIM = 10

DIGITS = ("thumb", "index", "middle", "ring", "pinky")


def _digit_joint(d, k):
    # k: 0 MCP, 1 PIP, 2 DIP, 3 TIP
    return 1 + 4 * d + k


def _digit_bone(d, k):
    # k: 0 MCP, 1 PIP, 2 DIP
    return 1 + 3 * d + k


def _build_topology():
    joint_parent = np.full(N_JOINTS, -1, dtype=np.int64)
    bone_parent = np.full(N_BONES, -1, dtype=np.int64)
    bone_pivot_joint = np.zeros(N_BONES, dtype=np.int64)
    bone_at_joint = np.full(N_JOINTS, -1, dtype=np.int64)
    bone_at_joint[0] = 0
    for d in range(5):
        mcp, pip_, dip, tip = (_digit_joint(d, k) for k in range(4))
        joint_parent[mcp] = 0
        joint_parent[pip_] = mcp
        joint_parent[dip] = pip_
        joint_parent[tip] = dip
        b_mcp, b_pip, b_dip = (_digit_bone(d, k) for k in range(3))
        bone_parent[b_mcp] = 0
        bone_parent[b_pip] = b_mcp
        bone_parent[b_dip] = b_pip
        bone_pivot_joint[b_mcp] = mcp
        bone_pivot_joint[b_pip] = pip_
        bone_pivot_joint[b_dip] = dip
        bone_at_joint[mcp] = b_mcp
        bone_at_joint[pip_] = b_pip
        bone_at_joint[dip] = b_dip
    return joint_parent, bone_parent, bone_pivot_joint, bone_at_joint


JOINT_PARENT, BONE_PARENT, BONE_PIVOT_JOINT, BONE_AT_JOINT = _build_topology()

# mirroring a rotation through the yz plane: keep the x component of each
# axis-angle triple, negate y and z
MIRROR_MASK = np.tile([1.0, -1.0, -1.0], N_BONES)


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


# skeleton intent: wrist at the origin, fingers pointing +y, thumb on -x.
# MCP position, then per-segment (direction, length) for MCP->PIP->DIP->TIP.
_DIGIT_SPEC = {
    "thumb": ((-0.040, 0.025, 0.008),
              [((-0.55, 0.75, 0.25), 0.034), ((-0.45, 0.85, 0.15), 0.028), ((-0.35, 0.90, 0.10), 0.024)]),
    "index": ((-0.022, 0.088, 0.003),
              [((-0.06, 0.99, 0.05), 0.042), ((-0.04, 1.00, 0.00), 0.026), ((-0.02, 0.99, -0.04), 0.021)]),
    "middle": ((0.000, 0.092, 0.002),
               [((0.00, 1.00, 0.04), 0.046), ((0.00, 1.00, 0.00), 0.029), ((0.00, 0.99, -0.05), 0.023)]),
    "ring": ((0.021, 0.087, 0.000),
             [((0.05, 0.99, 0.03), 0.040), ((0.04, 1.00, 0.00), 0.026), ((0.03, 0.99, -0.04), 0.021)]),
    "pinky": ((0.042, 0.077, -0.003),
              [((0.12, 0.99, 0.02), 0.031), ((0.10, 1.00, 0.00), 0.020), ((0.08, 0.99, -0.03), 0.017)]),
}

_RING_RADIUS = {0: 0.016, 1: 0.009, 2: 0.008, 3: 0.007, 4: 0.006}  # wrist, MCP, PIP, DIP, TIP
_PALM_VERTEX = np.array([0.004, 0.042, -0.011])


def _intended_joints():
    joints = np.zeros((N_JOINTS, 3))
    for d, name in enumerate(DIGITS):
        mcp_pos, segments = _DIGIT_SPEC[name]
        pos = np.asarray(mcp_pos, dtype=np.float64)
        joints[_digit_joint(d, 0)] = pos
        for k, (direction, length) in enumerate(segments):
            pos = pos + _unit(direction) * length
            joints[_digit_joint(d, k + 1)] = pos
    return joints


def _ring_frame(axis):
    axis = _unit(axis)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(axis, ref)) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    e1 = _unit(np.cross(axis, ref))
    e2 = np.cross(axis, e1)
    return e1, e2


def _joint_kind(j):
    if j == 0:
        return 0
    return 1 + (j - 1) % 4


def _build_vertices(intent):
    verts = np.zeros((N_VERTICES, 3))
    angles = np.array([0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0])
    for j in range(N_JOINTS):
        if j == 0:
            axis = np.array([0.0, 1.0, 0.0])
        else:
            axis = intent[j] - intent[JOINT_PARENT[j]]
        e1, e2 = _ring_frame(axis)
        r = _RING_RADIUS[_joint_kind(j)]
        for a, ang in enumerate(angles):
            verts[3 * j + a] = intent[j] + r * (np.cos(ang) * e1 + np.sin(ang) * e2)
    verts[63] = _PALM_VERTEX
    return verts + 0.0  # normalize away any negative zeros


def _build_skin_weights():
    w = np.zeros((N_VERTICES, N_BONES))
    for j in range(N_JOINTS):
        kind = _joint_kind(j)
        rows = slice(3 * j, 3 * j + 3)
        if kind == 0:
            w[rows, 0] = 1.0
        elif kind in (1, 2, 3):
            bone = BONE_AT_JOINT[j]
            w[rows, bone] = 0.5
            w[rows, BONE_PARENT[bone]] = 0.5
        else:  # fingertip rides its DIP bone rigidly
            w[rows, BONE_AT_JOINT[JOINT_PARENT[j]]] = 1.0
    w[63, 0] = 1.0
    return w


def _build_regressor():
    reg = np.zeros((N_JOINTS, N_VERTICES))
    for j in range(N_JOINTS):
        reg[j, 3 * j] = 0.5
        reg[j, 3 * j + 1] = 0.25
        reg[j, 3 * j + 2] = 0.25
    return reg


def _build_blend_dirs(verts, intent):
    dirs = np.zeros((N_SHAPE, N_VERTICES, 3))
    dirs[0] = 0.06 * verts
    dirs[1, :, 1] = 0.05 * np.clip(verts[:, 1], 0.0, None)
    dirs[2, :, 0] = 0.05 * verts[:, 0]
    dirs[3, :, 2] = 0.08 * verts[:, 2]
    for d in range(5):
        mcp = intent[_digit_joint(d, 0)]
        tip = intent[_digit_joint(d, 3)]
        axis = tip - mcp
        length = np.linalg.norm(axis)
        axis = axis / length
        vert_rows = [3 * _digit_joint(d, k) + a for k in range(4) for a in range(3)]
        for row in vert_rows:
            t = np.clip(np.dot(verts[row] - mcp, axis) / length, 0.0, 1.0)
            dirs[4 + d, row] = 0.035 * t * axis
    dirs[9, :, 2] = 0.25 * verts[:, 1] ** 2
    return dirs


def _build_faces():
    def tube(a, b):
        tris = []
        for i in range(3):
            j = (i + 1) % 3
            tris.append((a[i], b[i], b[j]))
            tris.append((a[i], b[j], a[j]))
        return tris

    def ring(j):
        return [3 * j, 3 * j + 1, 3 * j + 2]

    faces = []
    for d in range(5):
        faces += tube(ring(0), ring(_digit_joint(d, 0)))
        for k in range(3):
            faces += tube(ring(_digit_joint(d, k)), ring(_digit_joint(d, k + 1)))
        tip = ring(_digit_joint(d, 3))
        faces.append(tuple(tip))
    wrist = ring(0)
    for i in range(3):
        faces.append((wrist[i], 63, wrist[(i + 1) % 3]))
    return np.array(faces, dtype=np.int64)


def _build_pose_limits():
    lo = np.zeros(POSE_DIM)
    hi = np.zeros(POSE_DIM)

    def set_bone(b, bounds):
        for axis, (a, z) in enumerate(bounds):
            lo[3 * b + axis] = a
            hi[3 * b + axis] = z

    set_bone(0, [(-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5)])
    for d in range(5):
        if d == 0:
            set_bone(_digit_bone(d, 0), [(-0.3, 0.9), (-0.3, 0.3), (-0.5, 0.5)])
        else:
            set_bone(_digit_bone(d, 0), [(-0.25, 1.3), (-0.1, 0.1), (-0.3, 0.3)])
        set_bone(_digit_bone(d, 1), [(-0.1, 1.5), (-0.05, 0.05), (-0.05, 0.05)])
        set_bone(_digit_bone(d, 2), [(-0.1, 1.2), (-0.05, 0.05), (-0.05, 0.05)])
    return np.stack([lo, hi], axis=1)


@dataclass(frozen=True)
class HandTemplate:
    """Rest-pose hand: geometry, rig, shape space, regression."""

    rest_joints: np.ndarray            # (21, 3), equals joint_regressor @ template_vertices
    template_vertices: np.ndarray      # (64, 3)
    skin_weights: np.ndarray           # (64, 16), rows sum to 1
    blend_dirs: np.ndarray             # (10, 64, 3)
    joint_regressor: np.ndarray        # (21, 64), rows sum to 1
    faces: np.ndarray                  # (F, 3) triangle vertex ids
    joint_parent: np.ndarray = field(default_factory=lambda: JOINT_PARENT.copy())
    bone_parent: np.ndarray = field(default_factory=lambda: BONE_PARENT.copy())
    bone_pivot_joint: np.ndarray = field(default_factory=lambda: BONE_PIVOT_JOINT.copy())
    bone_at_joint: np.ndarray = field(default_factory=lambda: BONE_AT_JOINT.copy())
    pose_limits: np.ndarray = field(default_factory=_build_pose_limits)

    @property
    def n_vertices(self):
        return self.template_vertices.shape[0]


_CACHED = None


def default_template():
    """The canonical right-hand template (built once, shared, treat as read-only)."""
    global _CACHED
    if _CACHED is None:
        intent = _intended_joints()
        verts = _build_vertices(intent)
        reg = _build_regressor()
        _CACHED = HandTemplate(
            rest_joints=reg @ verts,
            template_vertices=verts,
            skin_weights=_build_skin_weights(),
            blend_dirs=_build_blend_dirs(verts, intent),
            joint_regressor=reg,
            faces=_build_faces(),
        )
    return _CACHED
