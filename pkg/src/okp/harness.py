"""Synthetic data generation, detector-error simulation, and evaluation.

The dataset file format is line-delimited JSON, one record per frame:

    {"schema": 1, "skeleton": "h36m17", "frame": "frame000000",
     "group": "synthetic", "space": "world", "coords": [...],
     "pred_coords": [...], "gt_rotations": [...],
     "solved_root": [...], "solved_rotations": [...], "solved_joints": [...]}

``coords`` holds the ground-truth keypoints (3 numbers per keypoint in
the canonical layout); ``pred_coords`` optionally holds detections with
the same layout; ``gt_rotations`` optionally holds 9 numbers per
rotating bone (row-major world rotations). The ``solved_*`` fields are
written by the solve stage. One skeleton per file; mixed files are
rejected.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, replace

import numpy as np

from .codec import DEFAULT_EXTEND
from .errors import EmptyDataset, FormatError, OkpError, SpaceMismatch
from .geometry import rotation_about_axis
from .markers import (
    NORMALIZED,
    WORLD,
    KeypointSet,
    flip_merge,
    mirror_keypoints,
    solve_pose,
    synthesize_okps,
)
from .metrics import (
    MetricsReport,
    aggregate_frames,
    maa,
    mpjas,
    mpjpe,
    pck,
    pmpjpe,
    ppck,
)
from .skeleton import GLOBAL, Pose, Skeleton, builtin_skeleton, forward_kinematics

SCHEMA_VERSION = 1


@dataclass
class FrameRecord:
    """One evaluation frame: ground truth plus optional predictions."""

    frame_id: str
    group: str
    gt_keypoints: KeypointSet
    gt_pose: Pose | None = None
    pred_keypoints: KeypointSet | None = None
    lengths_id: str | None = None
    solved_pose: Pose | None = None
    solved_joints: np.ndarray | None = None


@dataclass
class EvalOptions:
    """Knobs for evaluate(); defaults match the standard protocols.

    When ``noise_sigma`` or ``error_scale`` is set, predictions are
    derived per frame from the stored predictions (or the ground truth
    when none exist) by Gaussian perturbation and/or interpolation
    toward/away from the ground truth. Noise is deterministic per
    (noise_seed, frame index).
    """

    flip: bool = False
    pck_threshold: float = 150.0
    procrustes_scale: bool = True
    root_relative: bool = True
    noise_sigma: float | None = None
    noise_seed: int = 0
    error_scale: float | None = None


@dataclass
class SensitivityCurve:
    """Metric response to scaling detector errors about the ground truth."""

    error_scales: tuple
    detector_err_pct: tuple
    mpjpe: tuple
    mpjas: tuple

    def to_csv(self) -> str:
        lines = ["error_scale,detector_err_pct_resolution,mpjpe_mm,mpjas_rad"]
        for row in zip(self.error_scales, self.detector_err_pct, self.mpjpe, self.mpjas):
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def generate_synthetic_sequence(
    seed: int,
    n_frames: int,
    skel: Skeleton,
    lengths: np.ndarray,
    angle_limit: float = np.pi,
    group: str = "synthetic",
) -> list[FrameRecord]:
    """Deterministic ground-truth frames with exact keypoints.

    Each frame perturbs every rotating bone's neutral frame by a random
    axis-angle rotation with angle at most ``angle_limit`` and places
    the root uniformly inside a 2 m cube. Keypoints are synthesized
    noiselessly, so solving them recovers the pose exactly.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if not 0.0 < angle_limit <= np.pi:
        raise ValueError("angle_limit must lie in (0, pi]")
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(n_frames):
        root = rng.uniform(-1000.0, 1000.0, size=3)
        rots = np.empty((skel.n_rotations, 3, 3))
        for slot, k in enumerate(skel.rotating):
            axis = rng.normal(size=3)
            angle = rng.uniform(0.0, angle_limit)
            rots[slot] = skel.neutral_frames[k] @ rotation_about_axis(axis, angle)
        pose = Pose(root, rots, GLOBAL)
        frames.append(
            FrameRecord(
                frame_id=f"frame{i:06d}",
                group=group,
                gt_keypoints=synthesize_okps(skel, pose, lengths),
                gt_pose=pose,
            )
        )
    return frames


def inject_error_scale(pred: KeypointSet, gt: KeypointSet, s: float) -> KeypointSet:
    """Interpolate/extrapolate detections about the ground truth.

    Returns gt + s * (pred - gt): s=0 reproduces the ground truth, s=1
    the original predictions, s>1 amplifies the detector's errors while
    preserving their correlation structure.
    """
    if pred.space != gt.space:
        raise SpaceMismatch(f"{pred.space!r} vs {gt.space!r}")
    if pred.points.shape != gt.points.shape:
        raise SpaceMismatch(
            f"layout mismatch: {pred.points.shape} vs {gt.points.shape}"
        )
    if s < 0.0:
        raise ValueError("error scale must be >= 0")
    return KeypointSet(gt.points + s * (pred.points - gt.points), gt.space)


def inject_gaussian_noise(kps: KeypointSet, sigma: float, seed) -> KeypointSet:
    """Add i.i.d. zero-mean Gaussian noise per coordinate, seeded."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return kps.copy()
    rng = np.random.default_rng(seed)
    return KeypointSet(kps.points + rng.normal(0.0, sigma, kps.points.shape), kps.space)


def _realized_pred(fr: FrameRecord, index: int, opts: EvalOptions) -> KeypointSet:
    pred = fr.pred_keypoints if fr.pred_keypoints is not None else fr.gt_keypoints
    if opts.noise_sigma is not None:
        pred = inject_gaussian_noise(pred, opts.noise_sigma, [opts.noise_seed, index])
    if opts.error_scale is not None:
        pred = inject_error_scale(pred, fr.gt_keypoints, opts.error_scale)
    return pred


def _gt_rotations(fr: FrameRecord, skel: Skeleton) -> np.ndarray:
    if fr.gt_pose is not None:
        return fr.gt_pose.rotations
    return solve_pose(fr.gt_keypoints, skel).rotations


def _evaluate_frame(
    fr: FrameRecord, index: int, skel: Skeleton, lengths: np.ndarray, opts: EvalOptions
) -> dict:
    gt_joints = fr.gt_keypoints.points[: skel.n_joints]
    gt_rots = _gt_rotations(fr, skel)

    recipe = opts.noise_sigma is not None or opts.error_scale is not None
    if fr.solved_pose is not None and fr.solved_joints is not None and not recipe and not opts.flip:
        # Re-ingesting a solve-stage output: trust its rotations/positions.
        pose = fr.solved_pose
        pred_joints = fr.solved_joints
    else:
        pred = _realized_pred(fr, index, opts)
        if opts.flip:
            pred = flip_merge(pred, mirror_keypoints(pred, skel), skel)
        pose = solve_pose(pred, skel)
        pred_joints = forward_kinematics(skel, pose, lengths)

    return {
        "mpjpe_p1": mpjpe(
            pred_joints, gt_joints, root_relative=opts.root_relative, root_index=skel.root
        ),
        "mpjpe_p2": pmpjpe(pred_joints, gt_joints, with_scale=opts.procrustes_scale),
        "pck": pck(
            pred_joints, gt_joints, opts.pck_threshold, skel.pck_joints, root_index=skel.root
        ),
        "ppck": ppck(
            pred_joints, gt_joints, opts.pck_threshold, skel.pck_joints,
            with_scale=opts.procrustes_scale,
        ),
        "mpjas": mpjas(pose.rotations, gt_rots),
        "maa": maa(pose.rotations, gt_rots),
    }


def evaluate(
    frames: list[FrameRecord],
    skel: Skeleton,
    lengths: np.ndarray,
    options: EvalOptions | None = None,
) -> MetricsReport:
    """Solve, reconstruct and score every frame; aggregate per group.

    Frames that fail (incomplete keypoints, degenerate markers) are
    skipped and counted in the report rather than aborting the run,
    unless every frame fails.

    Ground truth must be world-metric: reconstructed positions are in
    millimeters, so normalized-space ground truth would mix units in
    every position metric.
    """
    opts = options or EvalOptions()
    for fr in frames:
        if fr.gt_keypoints.space != WORLD:
            raise SpaceMismatch(
                f"frame {fr.frame_id!r}: evaluation requires world-metric ground "
                "truth (got a normalized-space set)"
            )
    rows = []
    failed = 0
    first_error: OkpError | None = None
    for index, fr in enumerate(frames):
        try:
            rows.append((fr.group, _evaluate_frame(fr, index, skel, lengths, opts)))
        except OkpError as exc:
            failed += 1
            if first_error is None:
                first_error = exc
            print(f"warning: frame {fr.frame_id!r} skipped: {exc}", file=sys.stderr)
    if not rows:
        raise EmptyDataset(f"all {failed} frames failed; first error: {first_error}")
    return aggregate_frames(rows, failed_frames=failed)


def _detector_error_pct(pred: KeypointSet, gt: KeypointSet) -> float:
    """Mean 2D detection error as a fraction of the heatmap span.

    Normalized sets use the nominal extended span (2 * 1.25); world
    sets use the extended bounding-box width of the frame's ground
    truth, mirroring how a detector's heatmaps frame the subject.
    """
    err = float(np.linalg.norm(pred.points[:, :2] - gt.points[:, :2], axis=1).mean())
    if gt.space == NORMALIZED:
        span = 2.0 * DEFAULT_EXTEND
    else:
        extent = gt.points[:, :2].max(axis=0) - gt.points[:, :2].min(axis=0)
        span = DEFAULT_EXTEND * float(extent.max())
    if span <= 0.0:
        raise ValueError("ground-truth keypoints have zero spatial extent")
    return err / span


def sensitivity_sweep(
    frames: list[FrameRecord],
    scales,
    skel: Skeleton,
    lengths: np.ndarray,
    options: EvalOptions | None = None,
) -> SensitivityCurve:
    """Evaluate at each error scale; one curve row per scale."""
    scales = [float(s) for s in scales]
    if not scales:
        raise ValueError("scales must be nonempty")
    if any(s < 0.0 for s in scales):
        raise ValueError("scales must be non-negative")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly increasing")
    opts = options or EvalOptions()

    err_col, mpjpe_col, mpjas_col = [], [], []
    for s in scales:
        opts_s = replace(opts, error_scale=s)
        report = evaluate(frames, skel, lengths, opts_s)
        errs = []
        for index, fr in enumerate(frames):
            try:
                errs.append(_detector_error_pct(_realized_pred(fr, index, opts_s), fr.gt_keypoints))
            except OkpError:
                continue
        err_col.append(float(np.mean(errs)) if errs else float("nan"))
        mpjpe_col.append(report.overall.mpjpe_p1)
        mpjas_col.append(report.overall.mpjas)
    return SensitivityCurve(
        error_scales=tuple(scales),
        detector_err_pct=tuple(err_col),
        mpjpe=tuple(mpjpe_col),
        mpjas=tuple(mpjas_col),
    )


def solve_frames(
    frames: list[FrameRecord], skel: Skeleton, lengths: np.ndarray, flip: bool = False
) -> list[FrameRecord]:
    """Fill solved_pose/solved_joints from each frame's detections.

    Uses a frame's predictions when present, otherwise its ground-truth
    keypoints. Failures abort with the offending frame named.
    """
    out = []
    for fr in frames:
        kps = fr.pred_keypoints if fr.pred_keypoints is not None else fr.gt_keypoints
        if flip:
            kps = flip_merge(kps, mirror_keypoints(kps, skel), skel)
        try:
            pose = solve_pose(kps, skel)
        except OkpError as exc:
            exc.args = (f"frame {fr.frame_id!r}: {exc}",)
            raise
        out.append(
            replace(
                fr,
                solved_pose=pose,
                solved_joints=forward_kinematics(skel, pose, lengths),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Dataset IO
# ---------------------------------------------------------------------------


def _frame_to_record(fr: FrameRecord, skel: Skeleton) -> dict:
    rec = {
        "schema": SCHEMA_VERSION,
        "skeleton": skel.name,
        "frame": fr.frame_id,
        "group": fr.group,
        "space": fr.gt_keypoints.space,
        "coords": fr.gt_keypoints.points.ravel().tolist(),
    }
    if fr.pred_keypoints is not None:
        if fr.pred_keypoints.space != fr.gt_keypoints.space:
            raise SpaceMismatch(
                f"frame {fr.frame_id!r}: prediction space differs from ground truth"
            )
        rec["pred_coords"] = fr.pred_keypoints.points.ravel().tolist()
    if fr.gt_pose is not None:
        rec["gt_rotations"] = fr.gt_pose.rotations.ravel().tolist()
    if fr.lengths_id is not None:
        rec["lengths_id"] = fr.lengths_id
    if fr.solved_pose is not None:
        rec["solved_root"] = fr.solved_pose.root_position.ravel().tolist()
        rec["solved_rotations"] = fr.solved_pose.rotations.ravel().tolist()
    if fr.solved_joints is not None:
        rec["solved_joints"] = np.asarray(fr.solved_joints, dtype=float).ravel().tolist()
    return rec


def write_dataset(path_or_file, skel: Skeleton, frames: list[FrameRecord]) -> None:
    """Write frames as line-delimited JSON (see module docstring)."""
    if hasattr(path_or_file, "write"):
        for fr in frames:
            path_or_file.write(json.dumps(_frame_to_record(fr, skel)) + "\n")
        return
    with open(path_or_file, "w", encoding="utf-8") as fh:
        for fr in frames:
            fh.write(json.dumps(_frame_to_record(fr, skel)) + "\n")


def _array_field(rec: dict, key: str, expected: int, line: int):
    vals = rec.get(key)
    if vals is None:
        return None
    arr = np.asarray(vals, dtype=float)
    if arr.shape != (expected,):
        raise FormatError(
            f"line {line}: field {key!r} must hold {expected} numbers, got {arr.shape}"
        )
    return arr


def read_dataset(path, skeleton: Skeleton | None = None):
    """Read a dataset file; returns (skeleton, frames).

    When ``skeleton`` is None the file's declared skeleton name is
    resolved against the built-ins. Files mixing skeleton names are
    rejected.
    """
    frames = []
    skel = skeleton
    declared: str | None = skel.name if skel is not None else None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"line {line_no}: invalid JSON: {exc}") from exc
            if rec.get("schema") != SCHEMA_VERSION:
                raise FormatError(
                    f"line {line_no}: unsupported schema {rec.get('schema')!r}"
                )
            name = rec.get("skeleton")
            if declared is None:
                declared = name
                skel = builtin_skeleton(name)
            elif name != declared:
                raise FormatError(
                    f"line {line_no}: skeleton {name!r} differs from {declared!r} "
                    "(one skeleton per file)"
                )
            space = rec.get("space")
            if space not in (WORLD, NORMALIZED):
                raise FormatError(f"line {line_no}: unknown space {space!r}")

            n_coords = 3 * skel.n_keypoints
            coords = _array_field(rec, "coords", n_coords, line_no)
            if coords is None:
                raise FormatError(f"line {line_no}: missing required field 'coords'")
            gt_kps = KeypointSet(coords.reshape(-1, 3), space)

            pred = _array_field(rec, "pred_coords", n_coords, line_no)
            gt_rot = _array_field(rec, "gt_rotations", 9 * skel.n_rotations, line_no)
            solved_rot = _array_field(rec, "solved_rotations", 9 * skel.n_rotations, line_no)
            solved_root = _array_field(rec, "solved_root", 3, line_no)
            solved_joints = _array_field(rec, "solved_joints", 3 * skel.n_joints, line_no)

            gt_pose = None
            if gt_rot is not None:
                gt_pose = Pose(
                    gt_kps.points[skel.root].copy(), gt_rot.reshape(-1, 3, 3), GLOBAL
                )
            solved_pose = None
            if solved_rot is not None and solved_root is not None:
                solved_pose = Pose(solved_root, solved_rot.reshape(-1, 3, 3), GLOBAL)

            frames.append(
                FrameRecord(
                    frame_id=str(rec.get("frame", f"line{line_no}")),
                    group=str(rec.get("group", "all")),
                    gt_keypoints=gt_kps,
                    gt_pose=gt_pose,
                    pred_keypoints=KeypointSet(pred.reshape(-1, 3), space)
                    if pred is not None
                    else None,
                    lengths_id=rec.get("lengths_id"),
                    solved_pose=solved_pose,
                    solved_joints=solved_joints.reshape(-1, 3)
                    if solved_joints is not None
                    else None,
                )
            )
    if not frames:
        raise EmptyDataset(f"{path}: no frames")
    return skel, frames
