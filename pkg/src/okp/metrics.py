"""Position and rotation evaluation metrics plus training losses.

Position error conventions follow the common benchmark protocols:
Protocol 1 is root-relative raw error, Protocol 2 aligns the whole
skeleton to the ground truth with a Procrustes fit (similarity by
default; pass with_scale=False for purely rigid) before measuring.
Rotation metrics are built on the geodesic separation angle in
[0, pi]: MPJAS averages it, MAA averages 1 - angle/pi.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CountMismatch, SpaceMismatch
from .geometry import WeightedCorrespondences, geodesic_angles, require_rotations, umeyama_align
from .markers import KeypointSet, okp_block
from .skeleton import Skeleton

PCK_THRESHOLD_MM = 150.0


def _paired(pred, gt, min_len=1):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise CountMismatch(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.shape[0] < min_len:
        raise CountMismatch(f"need at least {min_len} joints, got {pred.shape[0]}")
    return pred, gt


def mpjpe(pred, gt, root_relative: bool = False, root_index: int = 0) -> float:
    """Mean per-joint position error in input units (mm for world space)."""
    pred, gt = _paired(pred, gt)
    if root_relative:
        pred = pred - pred[root_index]
        gt = gt - gt[root_index]
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def aligned_to(pred, gt, with_scale: bool = True) -> np.ndarray:
    """Procrustes-align pred onto gt (rotation + translation, and scale
    unless disabled); unit weights over all joints."""
    pred, gt = _paired(pred, gt, min_len=3)
    fit = umeyama_align(
        WeightedCorrespondences(pred, gt, np.ones(len(pred))), with_scale=with_scale
    )
    return fit.apply(pred)


def pmpjpe(pred, gt, with_scale: bool = True) -> float:
    """Protocol-2 error: MPJPE after Procrustes alignment of pred to gt."""
    return mpjpe(aligned_to(pred, gt, with_scale), np.asarray(gt, dtype=float))


def pck(
    pred,
    gt,
    threshold: float = PCK_THRESHOLD_MM,
    subset=None,
    root_index: int = 0,
    root_relative: bool = True,
) -> float:
    """Fraction of joints whose (root-relative) error is below threshold."""
    pred, gt = _paired(pred, gt)
    if root_relative:
        pred = pred - pred[root_index]
        gt = gt - gt[root_index]
    err = np.linalg.norm(pred - gt, axis=1)
    if subset is not None:
        subset = np.asarray(subset, dtype=int)
        if subset.size == 0 or subset.min() < 0 or subset.max() >= len(err):
            raise CountMismatch(f"invalid pck subset for {len(err)} joints")
        err = err[subset]
    return float(np.mean(err < threshold))


def ppck(pred, gt, threshold: float = PCK_THRESHOLD_MM, subset=None, with_scale: bool = True) -> float:
    """PCK after Procrustes alignment (no extra root-centering)."""
    aligned = aligned_to(pred, gt, with_scale)
    return pck(aligned, np.asarray(gt, dtype=float), threshold, subset, root_relative=False)


def separation_angles(pred_rots, gt_rots) -> np.ndarray:
    """Validated geodesic separation per rotation pair, in [0, pi]."""
    pred_rots = require_rotations(pred_rots, "pred_rots")
    gt_rots = require_rotations(gt_rots, "gt_rots")
    if pred_rots.shape != gt_rots.shape:
        raise CountMismatch(
            f"rotation count mismatch: {pred_rots.shape[0]} vs {gt_rots.shape[0]}"
        )
    return geodesic_angles(pred_rots, gt_rots)


def mpjas(pred_rots, gt_rots) -> float:
    """Mean per-joint angular separation, radians."""
    return float(separation_angles(pred_rots, gt_rots).mean())


def maa(pred_rots, gt_rots) -> float:
    """Mean average accuracy: mean of 1 - separation/pi, in [0, 1]."""
    return float(np.mean(1.0 - separation_angles(pred_rots, gt_rots) / np.pi))


def loss_mpjpe(pred_kps: KeypointSet, gt_kps: KeypointSet) -> float:
    """Mean distance over ALL keypoints (joints and orientation markers)."""
    if pred_kps.space != gt_kps.space:
        raise SpaceMismatch(f"{pred_kps.space!r} vs {gt_kps.space!r}")
    pred, gt = _paired(pred_kps.points, gt_kps.points)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def loss_cnt(pred_kps: KeypointSet, gt_kps: KeypointSet, skel: Skeleton) -> float:
    """Centroid-relative marker structure loss, summed over bone groups.

    For each rotating bone's six-marker group, compares marker offsets
    from the group centroid between prediction and ground truth, so a
    rigid translation of an entire group costs nothing.
    """
    if pred_kps.space != gt_kps.space:
        raise SpaceMismatch(f"{pred_kps.space!r} vs {gt_kps.space!r}")
    pred, gt = _paired(pred_kps.points, gt_kps.points)
    if pred.shape[0] != skel.n_keypoints:
        raise CountMismatch(
            f"expected {skel.n_keypoints} keypoints, got {pred.shape[0]}"
        )
    total = 0.0
    for slot, k in enumerate(skel.rotating):
        p, c = skel.bones[k]
        idx = [p, c] + list(range(*okp_block(skel, slot).indices(skel.n_keypoints)))
        gp = pred[idx] - pred[idx].mean(axis=0)
        gg = gt[idx] - gt[idx].mean(axis=0)
        total += float(np.linalg.norm(gp - gg, axis=1).sum())
    return total


# ---------------------------------------------------------------------------
# Aggregated reports
# ---------------------------------------------------------------------------

_METRIC_FIELDS = ("mpjpe_p1", "mpjpe_p2", "pck", "ppck", "mpjas", "maa")


@dataclass
class GroupMetrics:
    """Per-group (or overall) frame-averaged metric values."""

    frames: int
    mpjpe_p1: float
    mpjpe_p2: float
    pck: float
    ppck: float
    mpjas: float
    maa: float


@dataclass
class MetricsReport:
    """Overall and per-group metrics; groups hold frame-mean values.

    The overall row is the unweighted mean over all evaluated frames;
    group rows are means over the frames in that group. ``failed_frames``
    counts frames skipped due to per-frame errors.
    """

    overall: GroupMetrics
    per_group: dict[str, GroupMetrics] = field(default_factory=dict)
    failed_frames: int = 0

    def to_json(self) -> str:
        def row(g: GroupMetrics):
            out = {"frames": g.frames}
            out.update({f: getattr(g, f) for f in _METRIC_FIELDS})
            return out

        doc = {
            "overall": row(self.overall),
            "groups": {k: row(self.per_group[k]) for k in sorted(self.per_group)},
            "failed_frames": self.failed_frames,
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["group", "frames"] + list(_METRIC_FIELDS))
        for name in sorted(self.per_group):
            g = self.per_group[name]
            writer.writerow([name, g.frames] + [repr(getattr(g, f)) for f in _METRIC_FIELDS])
        g = self.overall
        writer.writerow(["all", g.frames] + [repr(getattr(g, f)) for f in _METRIC_FIELDS])
        return buf.getvalue()

    def to_text(self) -> str:
        header = (
            f"{'group':<16}{'frames':>7}{'mpjpe_p1':>10}{'mpjpe_p2':>10}"
            f"{'pck':>8}{'ppck':>8}{'mpjas':>9}{'maa':>8}"
        )
        lines = [header, "-" * len(header)]

        def fmt(name, g: GroupMetrics):
            return (
                f"{name:<16}{g.frames:>7}{g.mpjpe_p1:>10.3f}{g.mpjpe_p2:>10.3f}"
                f"{g.pck:>8.4f}{g.ppck:>8.4f}{g.mpjas:>9.5f}{g.maa:>8.4f}"
            )

        for name in sorted(self.per_group):
            lines.append(fmt(name, self.per_group[name]))
        lines.append(fmt("all", self.overall))
        if self.failed_frames:
            lines.append(f"skipped frames: {self.failed_frames}")
        return "\n".join(lines) + "\n"


def aggregate_frames(rows: list[tuple[str, dict]], failed_frames: int = 0) -> MetricsReport:
    """Fold per-frame metric dicts into a MetricsReport.

    ``rows`` pairs each frame's group label with a dict holding the
    fields of GroupMetrics. Aggregation order is deterministic
    regardless of how the rows were produced.
    """
    if not rows:
        raise CountMismatch("cannot aggregate zero frames")

    def mean_rows(subset):
        return GroupMetrics(
            frames=len(subset),
            **{
                f: float(np.mean([r[f] for r in subset]))
                for f in _METRIC_FIELDS
            },
        )

    groups: dict[str, list[dict]] = {}
    for label, row in rows:
        groups.setdefault(label, []).append(row)
    return MetricsReport(
        overall=mean_rows([r for _, r in rows]),
        per_group={label: mean_rows(sub) for label, sub in groups.items()},
        failed_frames=failed_frames,
    )
