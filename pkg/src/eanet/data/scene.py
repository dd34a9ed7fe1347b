"""Scene containers, the weak-perspective camera, and image rendering.

World space is meters, right-handed, with the camera looking down +z. A
scene places one or both hands near the origin; projection maps world
points to pixel coordinates and per-hand depth bins measured against each
hand's own wrist depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

AUX_SIZE = 13  # camera (4), depth_range, heat_size, depth_bins, both roots


@dataclass
class Camera:
    """Weak-perspective intrinsics: pixel = scale * world_xy + offset."""

    scale_x: float
    scale_y: float
    offset_x: float
    offset_y: float

    def project_px(self, points):
        points = np.asarray(points, dtype=np.float64)
        return np.stack(
            [
                self.scale_x * points[..., 0] + self.offset_x,
                self.scale_y * points[..., 1] + self.offset_y,
            ],
            axis=-1,
        )


@dataclass
class HandRecord:
    """Ground truth for one hand; zero-filled when the hand is absent."""

    joints25: np.ndarray   # (21, 3) grid x, y and depth bin z
    vertices: np.ndarray   # (64, 3) world meters
    theta: np.ndarray      # (48,)
    beta: np.ndarray       # (10,)


@dataclass
class Sample:
    image: np.ndarray      # (H, W, 3) in [0, 1]
    flags: np.ndarray      # (2,) left, right presence
    rel: np.ndarray        # (3,) right wrist minus left wrist, meters
    aux: np.ndarray        # (AUX_SIZE,) camera, depth mapping, wrist roots
    left: HandRecord
    right: HandRecord

    @property
    def camera(self):
        return Camera(*self.aux[0:4])

    @property
    def depth_range(self):
        return float(self.aux[4])

    @property
    def heat_size(self):
        return int(self.aux[5])

    @property
    def depth_bins(self):
        return int(self.aux[6])

    @property
    def left_root(self):
        return self.aux[7:10]

    @property
    def right_root(self):
        return self.aux[10:13]

    def root(self, hand):
        return self.left_root if hand == "left" else self.right_root


def make_aux(camera: Camera, depth_range, heat_size, depth_bins, left_root, right_root):
    return np.concatenate(
        [
            [camera.scale_x, camera.scale_y, camera.offset_x, camera.offset_y],
            [depth_range, float(heat_size), float(depth_bins)],
            np.asarray(left_root, dtype=np.float64),
            np.asarray(right_root, dtype=np.float64),
        ]
    )


def project_2_5d(points, camera: Camera, root, image_size, heat_size, depth_bins, depth_range):
    """World points to grid-unit x, y and root-relative depth bins.

    x and y land on the heatmap grid (pixel coordinate divided by the
    stride); z maps the band root_z +- depth_range onto [0, depth_bins - 1],
    so a point at the root's depth sits exactly at the middle bin.
    Coordinates are clamped to the grid box; returns (coords (n, 3),
    clamped (n,) bool mask).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ShapeError(f"project_2_5d wants (n, 3) points, got {points.shape}")
    stride = image_size / heat_size
    px = camera.project_px(points)
    gx = px[:, 0] / stride
    gy = px[:, 1] / stride
    z_rel = points[:, 2] - root[2]
    gz = (depth_bins - 1) / 2.0 * (1.0 + z_rel / depth_range)
    raw = np.stack([gx, gy, gz], axis=1)
    lo = np.zeros(3)
    hi = np.array([heat_size - 1.0, heat_size - 1.0, depth_bins - 1.0])
    coords = np.clip(raw, lo, hi)
    clamped = (raw != coords).any(axis=1)
    return coords, clamped


def unproject_2_5d(coords, camera: Camera, root, image_size, heat_size, depth_bins, depth_range):
    """Inverse of project_2_5d on unclamped coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    stride = image_size / heat_size
    x = (coords[:, 0] * stride - camera.offset_x) / camera.scale_x
    y = (coords[:, 1] * stride - camera.offset_y) / camera.scale_y
    z = root[2] + (coords[:, 2] * 2.0 / (depth_bins - 1) - 1.0) * depth_range
    return np.stack([x, y, z], axis=1)


def rasterize(image_size, camera: Camera, hands, depth_range, sigma=1.3):
    """Render hands as per-vertex Gaussian splats.

    hands: list of (channel, vertices (V, 3), root_z). Each vertex splats a
    Gaussian of width sigma pixels whose amplitude falls off with depth
    behind the wrist; a channel keeps the max over its splats. Channel 2
    marks left/right overlap as the product of the first two.
    """
    image = np.zeros((image_size, image_size, 3))
    ys, xs = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    for channel, vertices, root_z in hands:
        px = camera.project_px(vertices)
        z_rel = vertices[:, 2] - root_z
        amp = np.clip(0.75 - 0.5 * z_rel / depth_range, 0.2, 1.0)
        d2 = (xs[:, :, None] - px[:, 0]) ** 2 + (ys[:, :, None] - px[:, 1]) ** 2
        splats = amp * np.exp(-0.5 * d2 / (sigma * sigma))
        image[:, :, channel] = np.clip(splats.max(axis=2), 0.0, 1.0)
    image[:, :, 2] = image[:, :, 0] * image[:, :, 1]
    return image
