"""Geometry error metrics and the evaluation protocol.

Joint error root-aligns at the wrist and scale-aligns by total skeleton
length; vertex error root-aligns at the regressed wrist and scale-aligns by
the root-relative cloud RMS. Both are reported in millimeters. The relative
position error compares predicted and true right-wrist offsets and only
exists for two-hand samples. Reports bucket samples into single-hand and
two-hand groups; the combined number is the sample-count weighted mean.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..hand import forward_kinematics, mirror_pose, regress_joints, skin_mesh


def _as_points(x, n, what):
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (n, 3):
        raise ShapeError(f"{what} wants shape ({n}, 3), got {arr.shape}")
    return arr


def skeleton_length(joints, parents):
    child = np.arange(1, len(parents))
    segs = joints[child] - joints[parents[child]]
    return np.linalg.norm(segs, axis=1).sum()


def mpjpe(pred_joints, gt_joints, parents):
    """Mean per-joint position error, root- and scale-aligned, in mm.

    Both skeletons are centered on joint 0; the prediction is rescaled so
    its total bone length matches the truth. A degenerate skeleton on
    either side (zero total length) has no defined scale and raises.
    """
    n = len(parents)
    pred = _as_points(pred_joints, n, "pred_joints")
    gt = _as_points(gt_joints, n, "gt_joints")
    len_gt = skeleton_length(gt, parents)
    len_pred = skeleton_length(pred, parents)
    if len_gt == 0.0 or len_pred == 0.0:
        raise ValueError("degenerate skeleton: zero total bone length")
    pred_rel = (pred - pred[0]) * (len_gt / len_pred)
    gt_rel = gt - gt[0]
    return float(np.linalg.norm(pred_rel - gt_rel, axis=1).mean() * 1000.0)


def mpvpe(pred_vertices, pred_root, gt_vertices, gt_root):
    """Mean per-vertex position error after root and RMS-scale alignment, mm."""
    pred = np.asarray(pred_vertices, dtype=np.float64) - np.asarray(pred_root, dtype=np.float64)
    gt = np.asarray(gt_vertices, dtype=np.float64) - np.asarray(gt_root, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeError(f"mpvpe wants matching (V, 3) clouds, got {pred.shape} and {gt.shape}")
    rms_pred = np.sqrt((pred ** 2).sum(axis=1).mean())
    rms_gt = np.sqrt((gt ** 2).sum(axis=1).mean())
    if rms_pred == 0.0 or rms_gt == 0.0:
        raise ValueError("degenerate vertex cloud: zero root-relative spread")
    return float(np.linalg.norm(pred * (rms_gt / rms_pred) - gt, axis=1).mean() * 1000.0)


def mrrpe(pred_rel, gt_rel):
    """Right-wrist-relative-to-left position error in mm."""
    pred = np.asarray(pred_rel, dtype=np.float64)
    gt = np.asarray(gt_rel, dtype=np.float64)
    if pred.shape != (3,) or gt.shape != (3,):
        raise ShapeError(f"mrrpe wants (3,) offsets, got {pred.shape} and {gt.shape}")
    return float(np.linalg.norm(pred - gt) * 1000.0)


def pose_difference(theta_left, theta_right, template, beta_left=None, beta_right=None):
    """How far the two hands' articulations are from mirror images, in mm.

    The left pose is mirrored into the shared convention, global rotation is
    zeroed on both sides, and the skeletons are posed and compared joint by
    joint around the wrist. Mirror-image poses with equal shapes give
    exactly zero.
    """
    a = np.asarray(mirror_pose(theta_left), dtype=np.float64).copy()
    b = np.asarray(theta_right, dtype=np.float64).copy()
    a[0:3] = 0.0
    b[0:3] = 0.0
    beta_left = np.zeros(10) if beta_left is None else beta_left
    beta_right = np.zeros(10) if beta_right is None else beta_right
    ja, _, _ = forward_kinematics(template, a, beta_left)
    jb, _, _ = forward_kinematics(template, b, beta_right)
    da = ja.data - ja.data[0]
    db = jb.data - jb.data[0]
    return float(np.linalg.norm(da - db, axis=1).mean() * 1000.0)


# -- evaluation protocol -----------------------------------------------------


def per_sample_metrics(pred, sample, template):
    """Metric values for one sample.

    pred: {"left": {"theta", "beta"} or None, "right": ..., "rel": (3,)}.
    Predicted meshes are posed from the predicted parameters; joints on both
    sides come from the vertex regressor, so the comparison never mixes
    joint definitions. Returns {"mpjpe", "mpvpe", "two", "mrrpe"?}.
    """
    values_j, values_v = [], []
    for i, hand in enumerate(("left", "right")):
        if not sample.flags[i]:
            continue
        if pred.get(hand) is None:
            raise ShapeError(f"sample has a {hand} hand but the prediction does not")
        mesh = skin_mesh(template, pred[hand]["theta"], pred[hand]["beta"], hand)
        pred_verts = mesh.vertices.data
        pred_joints = regress_joints(template, pred_verts).data
        gt_verts = getattr(sample, hand).vertices
        gt_joints = regress_joints(template, gt_verts).data
        values_j.append(mpjpe(pred_joints, gt_joints, template.joint_parent))
        values_v.append(mpvpe(pred_verts, pred_joints[0], gt_verts, gt_joints[0]))
    if not values_j:
        raise ShapeError("sample flags mark no hand present")
    two = bool(sample.flags[0] and sample.flags[1])
    out = {"mpjpe": float(np.mean(values_j)), "mpvpe": float(np.mean(values_v)), "two": two}
    if two:
        out["mrrpe"] = mrrpe(pred["rel"], sample.rel)
    return out


@dataclass
class MetricReport:
    mpjpe_single: float
    mpjpe_two: float
    mpjpe_all: float
    mpvpe_single: float
    mpvpe_two: float
    mpvpe_all: float
    mrrpe: float
    n_single: int
    n_two: int

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _bucket_mean(values):
    return float(np.mean(values)) if values else math.nan


def aggregate(per_sample):
    """Combine per-sample metric dicts into a report.

    The "all" numbers weight the single- and two-hand buckets by their
    sample counts, which equals the plain mean over samples.
    """
    single = [m for m in per_sample if not m["two"]]
    two = [m for m in per_sample if m["two"]]
    out = {}
    for key in ("mpjpe", "mpvpe"):
        s = _bucket_mean([m[key] for m in single])
        t = _bucket_mean([m[key] for m in two])
        n = len(single) + len(two)
        allv = math.nan
        if n:
            allv = (len(single) * (0.0 if math.isnan(s) else s)
                    + len(two) * (0.0 if math.isnan(t) else t)) / n
        out[f"{key}_single"] = s
        out[f"{key}_two"] = t
        out[f"{key}_all"] = allv
    out["mrrpe"] = _bucket_mean([m["mrrpe"] for m in two])
    return MetricReport(n_single=len(single), n_two=len(two), **out)


def evaluate(model, samples, template):
    """Run the model over samples and aggregate the metric report."""
    rows = []
    for sample in samples:
        outputs = model.forward(sample.image)
        pred = {
            "left": {"theta": outputs.left.theta.data, "beta": outputs.left.beta.data},
            "right": {"theta": outputs.right.theta.data, "beta": outputs.right.beta.data},
            "rel": outputs.rel.data,
        }
        rows.append(per_sample_metrics(pred, sample, template))
    return aggregate(rows)


def write_metrics_csv(path, report: MetricReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "single", "two", "all"])
        writer.writerow(["mpjpe", report.mpjpe_single, report.mpjpe_two, report.mpjpe_all])
        writer.writerow(["mpvpe", report.mpvpe_single, report.mpvpe_two, report.mpvpe_all])
        writer.writerow(["mrrpe", "", report.mrrpe, report.mrrpe])
        writer.writerow(["samples", report.n_single, report.n_two, report.n_single + report.n_two])


def write_metrics_json(path, report: MetricReport):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
