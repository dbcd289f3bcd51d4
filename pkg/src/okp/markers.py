"""Orientation-keypoint synthesis and the inverse rotation solver.

Every rotating bone carries four virtual markers rigidly attached to
its local frame, placed at the bone midpoint and pushed out by half the
bone length to the left, right, front and back. Together with the two
joint keypoints at the bone's ends they form a six-marker cluster whose
world positions determine the bone's full rotation, including the roll
about the bone axis that joint positions alone cannot observe.

Keypoint vector layout (fixed, all files and arrays use it): the first
n_joints entries are the joint keypoints in skeleton joint order,
followed by one four-marker block per rotating bone in rotating-bone
order, each block ordered (left, right, front, back).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CountMismatch, IncompleteKeypoints, SpaceMismatch
from .geometry import WeightedCorrespondences, umeyama_align
from .skeleton import GLOBAL, Pose, Skeleton, forward_kinematics

WORLD = "world"
NORMALIZED = "normalized"

# Joint-keypoint observations are trusted twice as much as the virtual
# markers when solving for a bone's transform.
JOINT_WEIGHT = 2.0
MARKER_WEIGHT = 1.0


@dataclass
class KeypointSet:
    """Ordered keypoints with a coordinate-space tag.

    ``points`` has shape (n_joints + 4 * n_rotations, 3). ``space`` is
    ``"world"`` (millimeters) or ``"normalized"`` (unitless image-centered
    coordinates, nominal range [-1.25, 1.25] per axis).
    """

    points: np.ndarray
    space: str = WORLD

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.space not in (WORLD, NORMALIZED):
            raise ValueError(f"unknown keypoint space {self.space!r}")

    def copy(self) -> "KeypointSet":
        return KeypointSet(self.points.copy(), self.space)


@dataclass(frozen=True)
class BoneMarkerTemplate:
    """The six-marker cluster in bone-local, bone-length-normalized units.

    Rows: parent-side joint at the origin, child-side joint one unit up
    the bone axis, then the four offset markers at the bone midpoint
    displaced half a unit left/right/front/back.
    """

    points: np.ndarray


_TEMPLATE_POINTS = np.array(
    [
        [0.0, 0.0, 0.0],   # parent-side joint
        [0.0, 1.0, 0.0],   # child-side joint
        [0.5, 0.5, 0.0],   # left marker
        [-0.5, 0.5, 0.0],  # right marker
        [0.0, 0.5, 0.5],   # front marker
        [0.0, 0.5, -0.5],  # back marker
    ]
)

_MARKER_WEIGHTS = np.array(
    [JOINT_WEIGHT, JOINT_WEIGHT, MARKER_WEIGHT, MARKER_WEIGHT, MARKER_WEIGHT, MARKER_WEIGHT]
)


def bone_marker_template() -> BoneMarkerTemplate:
    """The shared six-marker template (identical for every bone)."""
    return BoneMarkerTemplate(_TEMPLATE_POINTS.copy())


def okp_block(skel: Skeleton, slot: int) -> slice:
    """Index range of rotating bone ``slot``'s four-marker block."""
    start = skel.n_joints + 4 * slot
    return slice(start, start + 4)


def synthesize_okps(skel: Skeleton, pose: Pose, lengths: np.ndarray) -> KeypointSet:
    """Generate the full keypoint set (world mm) for a pose.

    Joint keypoints come from forward kinematics; each rotating bone's
    four markers are its template offsets scaled by the bone length and
    carried through the bone's world rotation, anchored at the
    parent-side joint. Every marker therefore sits exactly half a bone
    length from the bone midpoint.
    """
    joints = forward_kinematics(skel, pose, lengths)
    lengths = np.asarray(lengths, dtype=float)
    pts = np.empty((skel.n_keypoints, 3))
    pts[: skel.n_joints] = joints
    offsets = _TEMPLATE_POINTS[2:]
    for slot, k in enumerate(skel.rotating):
        p, _ = skel.bones[k]
        rot = pose.rotations[slot]
        pts[okp_block(skel, slot)] = joints[p] + (lengths[k] * offsets) @ rot.T
    return KeypointSet(pts, WORLD)


def _check_layout(kps: KeypointSet, skel: Skeleton) -> np.ndarray:
    pts = kps.points
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] != skel.n_keypoints:
        raise CountMismatch(
            f"expected {skel.n_keypoints} keypoints for skeleton {skel.name!r}, "
            f"got shape {pts.shape}"
        )
    return pts


def solve_pose(kps: KeypointSet, skel: Skeleton) -> Pose:
    """Recover per-bone world rotations from a complete keypoint set.

    For each rotating bone the template, oriented by the bone's neutral
    frame, is rigidly aligned (no scale) to the observed six markers
    with joint keypoints double-weighted; composing the recovered
    alignment with the neutral frame yields the bone's world rotation.
    The root joint keypoint is reported as the root position.

    Raises IncompleteKeypoints when any entry is non-finite and
    CountMismatch when the layout does not match the skeleton.
    """
    pts = _check_layout(kps, skel)
    bad = np.nonzero(~np.isfinite(pts).all(axis=1))[0]
    if bad.size:
        raise IncompleteKeypoints(bad.tolist())

    rotations = np.empty((skel.n_rotations, 3, 3))
    for slot, k in enumerate(skel.rotating):
        p, c = skel.bones[k]
        neutral = skel.neutral_frames[k]
        target = np.vstack([pts[p], pts[c], pts[okp_block(skel, slot)]])
        source = _TEMPLATE_POINTS @ neutral.T
        fit = umeyama_align(
            WeightedCorrespondences(source, target, _MARKER_WEIGHTS), with_scale=False
        )
        rotations[slot] = fit.rotation @ neutral
    return Pose(pts[skel.root].copy(), rotations, GLOBAL)


def mirror_keypoints(kps: KeypointSet, skel: Skeleton) -> KeypointSet:
    """Reflect a keypoint set across the x = 0 plane, relabelling sides.

    Negates x, swaps left/right joints and their marker blocks, and
    swaps the left and right markers inside every block so each marker
    keeps its meaning in the mirrored body. The operation is an
    involution: applying it twice returns the input exactly.
    """
    pts = _check_layout(kps, skel)
    out = np.empty_like(pts)
    flipped = pts.copy()
    flipped[:, 0] = -flipped[:, 0]
    out[: skel.n_joints] = flipped[: skel.n_joints][skel.joint_flip]
    # Within a block: (left, right, front, back) -> (right, left, front, back).
    reorder = [1, 0, 2, 3]
    for slot in range(skel.n_rotations):
        src = okp_block(skel, int(skel.rotating_flip[slot]))
        out[okp_block(skel, slot)] = flipped[src][reorder]
    return KeypointSet(out, kps.space)


def flip_merge(kps: KeypointSet, kps_from_flipped_image: KeypointSet, skel: Skeleton) -> KeypointSet:
    """Average detections with un-mirrored detections from a flipped image.

    The second set is mirrored back into the first set's orientation and
    the two are averaged componentwise. Intended for normalized
    image-centered coordinates, where x-negation is the image flip.
    """
    if kps.space != kps_from_flipped_image.space:
        raise SpaceMismatch(
            f"cannot merge {kps.space!r} with {kps_from_flipped_image.space!r} keypoints"
        )
    a = _check_layout(kps, skel)
    b = mirror_keypoints(kps_from_flipped_image, skel).points
    return KeypointSet(0.5 * (a + b), kps.space)
