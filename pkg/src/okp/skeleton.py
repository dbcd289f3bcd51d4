"""Kinematic skeleton model: hierarchy, neutral frames, forward kinematics.

A skeleton is a tree of named joints. Every non-root joint defines one
bone (parent joint -> this joint); bones are indexed in joint order with
the root skipped. A subset of bones carries free rotations; the
remaining fixed links inherit their orientation from the parent chain.

Bone-local frame convention: local Y runs along the bone from parent to
child, local Z is the bone's forward direction, local X = Y x Z (the
bone's left). ``neutral_frames[k]`` is bone k's world rotation in the
reference T-pose, so a pose equal to the neutral frames reproduces the
T-pose exactly.

Per-bone ``reverse`` flags do not affect kinematics here; they record
which bones use a child-to-parent Y axis when realigning rotation
conventions of external annotation sources (see
``geometry.frame_from_bone_and_forward``).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, EmptyDataset
from .geometry import frame_from_bone_and_forward, is_rotation, require_rotations

GLOBAL = "global"
LOCAL = "local"

Y_AXIS = np.array([0.0, 1.0, 0.0])

CONFIG_SCHEMA = 1


@dataclass
class Pose:
    """Root position (mm) plus one rotation per rotating bone.

    ``rotations`` has shape (n_rotations, 3, 3), indexed parallel to
    ``Skeleton.rotating``. The convention tag says whether each entry is
    the bone's world rotation ("global") or is expressed relative to the
    parent bone's world rotation ("local").
    """

    root_position: np.ndarray
    rotations: np.ndarray
    convention: str = GLOBAL

    def __post_init__(self):
        self.root_position = np.asarray(self.root_position, dtype=float)
        self.rotations = np.asarray(self.rotations, dtype=float)
        if self.convention not in (GLOBAL, LOCAL):
            raise ValueError(f"unknown pose convention {self.convention!r}")


class Skeleton:
    """Validated joint hierarchy with bone metadata.

    Construction raises ConfigError (message names the offending field)
    on any inconsistency: cycles, out-of-range indices, non-orthonormal
    neutral frames, non-involutive flip pairs, or a rotating bone whose
    mirror image is not itself a rotating bone.
    """

    def __init__(
        self,
        name: str,
        joints: list[str],
        parents: list[int],
        neutral_frames: np.ndarray,
        rotating: list[int],
        reverse_flags: list[bool],
        flip_pairs: list[tuple[int, int]],
        pck_joints: list[int],
        reference_lengths: np.ndarray,
    ):
        self.name = str(name)
        self.joints = tuple(str(j) for j in joints)
        n_joints = len(self.joints)
        if n_joints < 2:
            raise ConfigError("joints: need at least a root and one child")
        if len(set(self.joints)) != n_joints:
            raise ConfigError("joints: names must be unique")

        self.parents = tuple(int(p) for p in parents)
        if len(self.parents) != n_joints:
            raise ConfigError(
                f"parents: expected {n_joints} entries, got {len(self.parents)}"
            )
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if len(roots) != 1:
            raise ConfigError(f"parents: expected exactly one root, found {len(roots)}")
        self.root = roots[0]
        for i, p in enumerate(self.parents):
            if p == i:
                raise ConfigError(f"parents[{i}]: joint {self.joints[i]!r} parents itself")
            if p >= n_joints:
                raise ConfigError(f"parents[{i}]: index {p} out of range")

        # Bones in joint order with the root skipped; reachability check
        # doubles as cycle detection.
        self.bones = tuple(
            (self.parents[c], c) for c in range(n_joints) if c != self.root
        )
        self._bone_of_child = {c: k for k, (_, c) in enumerate(self.bones)}
        children: list[list[int]] = [[] for _ in range(n_joints)]
        for p, c in self.bones:
            children[p].append(c)
        seen = {self.root}
        queue = [self.root]
        topo: list[int] = []
        while queue:
            j = queue.pop(0)
            for c in children[j]:
                if c in seen:
                    raise ConfigError(f"parents: joint {self.joints[c]!r} visited twice")
                seen.add(c)
                topo.append(self._bone_of_child[c])
                queue.append(c)
        if len(seen) != n_joints:
            missing = sorted(set(range(n_joints)) - seen)
            raise ConfigError(
                f"parents: joints not reachable from root: "
                f"{[self.joints[i] for i in missing]}"
            )
        self.topo_bones = tuple(topo)

        n_bones = len(self.bones)
        self.neutral_frames = np.asarray(neutral_frames, dtype=float)
        if self.neutral_frames.shape != (n_bones, 3, 3):
            raise ConfigError(
                f"neutral_frames: expected shape ({n_bones}, 3, 3), "
                f"got {self.neutral_frames.shape}"
            )
        for k in range(n_bones):
            if not is_rotation(self.neutral_frames[k]):
                raise ConfigError(
                    f"bones[{self.joints[self.bones[k][1]]!r}].neutral_frame: "
                    "not an orthonormal right-handed frame"
                )

        self.rotating = tuple(int(k) for k in rotating)
        if len(set(self.rotating)) != len(self.rotating):
            raise ConfigError("rotating: bone indices must be unique")
        for k in self.rotating:
            if not 0 <= k < n_bones:
                raise ConfigError(f"rotating: bone index {k} out of range")
        self._rotating_slot = {k: i for i, k in enumerate(self.rotating)}

        self.reverse_flags = tuple(bool(f) for f in reverse_flags)
        if len(self.reverse_flags) != n_bones:
            raise ConfigError(
                f"reverse_flags: expected {n_bones} entries, got {len(self.reverse_flags)}"
            )

        self.flip_pairs = tuple((int(a), int(b)) for a, b in flip_pairs)
        joint_flip = np.arange(n_joints)
        used: set[int] = set()
        for a, b in self.flip_pairs:
            if not (0 <= a < n_joints and 0 <= b < n_joints) or a == b:
                raise ConfigError(f"flip_pairs: invalid pair ({a}, {b})")
            if a in used or b in used:
                raise ConfigError(f"flip_pairs: joint index reused in pair ({a}, {b})")
            used.update((a, b))
            joint_flip[a], joint_flip[b] = b, a
        self.joint_flip = joint_flip

        self.pck_joints = tuple(int(j) for j in pck_joints)
        for j in self.pck_joints:
            if not 0 <= j < n_joints:
                raise ConfigError(f"pck_joints: index {j} out of range")
        if len(set(self.pck_joints)) != len(self.pck_joints):
            raise ConfigError("pck_joints: indices must be unique")

        self.reference_lengths = np.asarray(reference_lengths, dtype=float)
        if self.reference_lengths.shape != (n_bones,):
            raise ConfigError(
                f"reference_lengths: expected {n_bones} entries, "
                f"got {self.reference_lengths.shape}"
            )
        if np.any(self.reference_lengths <= 0.0):
            raise ConfigError("reference_lengths: all lengths must be positive")

        # Parent bone of each bone (-1 when the bone hangs off the root).
        self.parent_bone = tuple(
            self._bone_of_child.get(p, -1) for p, _ in self.bones
        )

        # Mirror image of each rotating bone, as a rotating-slot permutation.
        rot_flip = []
        for k in self.rotating:
            p, c = self.bones[k]
            mp, mc = int(joint_flip[p]), int(joint_flip[c])
            mk = self._bone_of_child.get(mc)
            if mk is None or self.bones[mk][0] != mp:
                raise ConfigError(
                    f"flip_pairs: bone {self.joints[c]!r} has no mirror-image bone"
                )
            if mk not in self._rotating_slot:
                raise ConfigError(
                    f"flip_pairs: mirror of rotating bone {self.joints[c]!r} "
                    "is not a rotating bone"
                )
            rot_flip.append(self._rotating_slot[mk])
        self.rotating_flip = np.asarray(rot_flip, dtype=int)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_bones(self) -> int:
        return len(self.bones)

    @property
    def n_rotations(self) -> int:
        return len(self.rotating)

    @property
    def n_keypoints(self) -> int:
        # Joint keypoints plus four orientation keypoints per rotating bone.
        return self.n_joints + 4 * self.n_rotations

    def bone_of_child(self, joint: int) -> int:
        return self._bone_of_child[joint]

    def rotating_slot(self, bone: int) -> int:
        return self._rotating_slot[bone]

    def describe(self) -> str:
        return (
            f"{self.name}: {self.n_joints} joints, {self.n_bones} bones, "
            f"{self.n_rotations} free rotations, {self.n_keypoints} keypoints"
        )


def neutral_pose(skel: Skeleton, root_position=(0.0, 0.0, 0.0)) -> Pose:
    """The T-pose: every rotating bone at its neutral frame."""
    rots = np.stack([skel.neutral_frames[k] for k in skel.rotating])
    return Pose(np.asarray(root_position, dtype=float), rots, GLOBAL)


def default_bone_lengths(skel: Skeleton) -> np.ndarray:
    """Copy of the reference bone lengths shipped with the skeleton config."""
    return skel.reference_lengths.copy()


def bone_global_rotations(skel: Skeleton, pose: Pose) -> np.ndarray:
    """World rotation of every bone, (n_bones, 3, 3).

    Rotating bones take their entry from the pose; fixed links keep
    their T-pose offset relative to the parent bone (or stay at the
    neutral frame when attached directly to the root).
    """
    if pose.convention != GLOBAL:
        raise ValueError("pose must be in global convention")
    rots_in = require_rotations(pose.rotations, "pose.rotations")
    if rots_in.shape[0] != skel.n_rotations:
        raise ValueError(
            f"pose has {rots_in.shape[0]} rotations, skeleton needs {skel.n_rotations}"
        )
    out = np.empty((skel.n_bones, 3, 3))
    for b in skel.topo_bones:
        slot = skel._rotating_slot.get(b)
        if slot is not None:
            out[b] = rots_in[slot]
            continue
        pb = skel.parent_bone[b]
        if pb < 0:
            out[b] = skel.neutral_frames[b]
        else:
            offset = skel.neutral_frames[pb].T @ skel.neutral_frames[b]
            out[b] = out[pb] @ offset
    return out


def forward_kinematics(skel: Skeleton, pose: Pose, lengths: np.ndarray) -> np.ndarray:
    """Joint positions (n_joints, 3) in mm from a global-convention pose.

    Each child joint sits at parent + R_bone @ (length * Y), so a pose
    equal to the neutral frames reproduces the configured T-pose, and
    perturbing a bone's rotation about its own Y axis (a pure roll)
    moves no joint at all.
    """
    lengths = _checked_lengths(skel, lengths)
    rots = bone_global_rotations(skel, pose)
    pos = np.empty((skel.n_joints, 3))
    pos[skel.root] = np.asarray(pose.root_position, dtype=float)
    offsets = rots[:, :, 1] * lengths[:, None]  # R @ (l * Y) is R's Y column scaled
    for b in skel.topo_bones:
        p, c = skel.bones[b]
        pos[c] = pos[p] + offsets[b]
    return pos


def globals_to_locals(skel: Skeleton, pose: Pose) -> Pose:
    """Re-express rotating-bone rotations relative to their parent bone."""
    if pose.convention != GLOBAL:
        raise ValueError("pose must be in global convention")
    full = bone_global_rotations(skel, pose)
    out = np.empty_like(pose.rotations)
    for i, k in enumerate(skel.rotating):
        pb = skel.parent_bone[k]
        if pb < 0:
            out[i] = pose.rotations[i]
        else:
            out[i] = full[pb].T @ pose.rotations[i]
    return Pose(pose.root_position.copy(), out, LOCAL)


def locals_to_globals(skel: Skeleton, pose: Pose) -> Pose:
    """Inverse of globals_to_locals; round-trips are exact to float precision."""
    if pose.convention != LOCAL:
        raise ValueError("pose must be in local (parent-relative) convention")
    rots_in = require_rotations(pose.rotations, "pose.rotations")
    if rots_in.shape[0] != skel.n_rotations:
        raise ValueError(
            f"pose has {rots_in.shape[0]} rotations, skeleton needs {skel.n_rotations}"
        )
    full = np.empty((skel.n_bones, 3, 3))
    out = np.empty_like(rots_in)
    for b in skel.topo_bones:
        pb = skel.parent_bone[b]
        slot = skel._rotating_slot.get(b)
        if slot is not None:
            if pb < 0:
                full[b] = rots_in[slot]
            else:
                full[b] = full[pb] @ rots_in[slot]
            out[slot] = full[b]
        else:
            if pb < 0:
                full[b] = skel.neutral_frames[b]
            else:
                offset = skel.neutral_frames[pb].T @ skel.neutral_frames[b]
                full[b] = full[pb] @ offset
    return Pose(pose.root_position.copy(), out, GLOBAL)


def average_bone_lengths(skel: Skeleton, joint_position_frames) -> np.ndarray:
    """Per-bone mean parent-to-child distance over a set of joint arrays."""
    frames = [np.asarray(f, dtype=float) for f in joint_position_frames]
    if not frames:
        raise EmptyDataset("cannot average bone lengths over zero frames")
    stack = np.stack(frames)
    if stack.shape[1:] != (skel.n_joints, 3):
        raise ValueError(
            f"expected frames of shape ({skel.n_joints}, 3), got {stack.shape[1:]}"
        )
    parent_idx = [p for p, _ in skel.bones]
    child_idx = [c for _, c in skel.bones]
    diffs = stack[:, child_idx] - stack[:, parent_idx]
    return np.linalg.norm(diffs, axis=2).mean(axis=0)


def _checked_lengths(skel: Skeleton, lengths) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=float)
    if lengths.shape != (skel.n_bones,):
        raise ValueError(
            f"expected {skel.n_bones} bone lengths, got shape {lengths.shape}"
        )
    if np.any(lengths <= 0.0):
        raise ValueError("bone lengths must be positive")
    return lengths


# ---------------------------------------------------------------------------
# Built-in skeletons
#
# Both built-ins share one hand-designed T-pose: subject facing +Z, up
# +Y, the subject's left along +X, pelvis at the origin, millimeters.
# Neutral frames are derived from the T-pose bone directions with a +Z
# forward hint (feet use a -Y hint because the toe bones run along +Z).
# The 17-joint default has a single fixed link, thorax -> neck; the
# 21-joint variant adds toe and hand bones, all free.
# ---------------------------------------------------------------------------

_FORWARD = (0.0, 0.0, 1.0)
_DOWN = (0.0, -1.0, 0.0)

# (joint, parent, T-pose position, rotating, reverse, frame hint)
_TPOSE_17 = [
    ("pelvis", None, (0.0, 0.0, 0.0), True, False, _FORWARD),
    ("r_hip", "pelvis", (-130.0, 0.0, 0.0), True, False, _FORWARD),
    ("r_knee", "r_hip", (-130.0, -450.0, 0.0), True, True, _FORWARD),
    ("r_ankle", "r_knee", (-130.0, -900.0, 0.0), True, True, _FORWARD),
    ("l_hip", "pelvis", (130.0, 0.0, 0.0), True, False, _FORWARD),
    ("l_knee", "l_hip", (130.0, -450.0, 0.0), True, True, _FORWARD),
    ("l_ankle", "l_knee", (130.0, -900.0, 0.0), True, True, _FORWARD),
    ("spine", "pelvis", (0.0, 220.0, 0.0), True, False, _FORWARD),
    ("thorax", "spine", (0.0, 440.0, 0.0), True, False, _FORWARD),
    ("neck", "thorax", (0.0, 530.0, 0.0), False, False, _FORWARD),
    ("head", "neck", (0.0, 650.0, 0.0), True, False, _FORWARD),
    ("l_shoulder", "thorax", (180.0, 440.0, 0.0), True, False, _FORWARD),
    ("l_elbow", "l_shoulder", (460.0, 440.0, 0.0), True, False, _FORWARD),
    ("l_wrist", "l_elbow", (710.0, 440.0, 0.0), True, False, _FORWARD),
    ("r_shoulder", "thorax", (-180.0, 440.0, 0.0), True, False, _FORWARD),
    ("r_elbow", "r_shoulder", (-460.0, 440.0, 0.0), True, False, _FORWARD),
    ("r_wrist", "r_elbow", (-710.0, 440.0, 0.0), True, False, _FORWARD),
]

_TPOSE_21 = _TPOSE_17 + [
    ("l_foot", "l_ankle", (130.0, -900.0, 140.0), True, False, _DOWN),
    ("r_foot", "r_ankle", (-130.0, -900.0, 140.0), True, False, _DOWN),
    ("l_hand", "l_wrist", (790.0, 440.0, 0.0), True, False, _FORWARD),
    ("r_hand", "r_wrist", (-790.0, 440.0, 0.0), True, False, _FORWARD),
]

_FLIP_NAMES_17 = [
    ("l_hip", "r_hip"),
    ("l_knee", "r_knee"),
    ("l_ankle", "r_ankle"),
    ("l_shoulder", "r_shoulder"),
    ("l_elbow", "r_elbow"),
    ("l_wrist", "r_wrist"),
]

_FLIP_NAMES_21 = _FLIP_NAMES_17 + [("l_foot", "r_foot"), ("l_hand", "r_hand")]

# The 14-joint PCK subset: everything except pelvis, spine and thorax.
_PCK_NAMES = [
    "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "neck", "head", "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
]

BUILTIN_SKELETONS = ("h36m17", "h36m21")


def _build_tpose_skeleton(name, table, flip_names) -> Skeleton:
    names = [row[0] for row in table]
    index = {n: i for i, n in enumerate(names)}
    parents = [index[row[1]] if row[1] is not None else -1 for row in table]
    positions = {row[0]: np.asarray(row[2], dtype=float) for row in table}

    frames, lengths, rotating, reverse = [], [], [], []
    bone_idx = 0
    for joint, parent, _, is_rotating, rev, hint in table:
        if parent is None:
            continue
        vec = positions[joint] - positions[parent]
        frames.append(frame_from_bone_and_forward(vec, hint))
        lengths.append(float(np.linalg.norm(vec)))
        if is_rotating:
            rotating.append(bone_idx)
        reverse.append(rev)
        bone_idx += 1

    flip_pairs = [(index[a], index[b]) for a, b in flip_names]
    pck = [index[n] for n in _PCK_NAMES]
    return Skeleton(
        name=name,
        joints=names,
        parents=parents,
        neutral_frames=np.stack(frames),
        rotating=rotating,
        reverse_flags=reverse,
        flip_pairs=flip_pairs,
        pck_joints=pck,
        reference_lengths=np.asarray(lengths),
    )


def builtin_skeleton(name: str = "h36m17") -> Skeleton:
    """One of the embedded skeletons: "h36m17" (default) or "h36m21"."""
    if name == "h36m17":
        return _build_tpose_skeleton("h36m17", _TPOSE_17, _FLIP_NAMES_17)
    if name == "h36m21":
        return _build_tpose_skeleton("h36m21", _TPOSE_21, _FLIP_NAMES_21)
    raise ConfigError(f"unknown built-in skeleton {name!r}; have {BUILTIN_SKELETONS}")


# ---------------------------------------------------------------------------
# Config file format (TOML)
# ---------------------------------------------------------------------------


def load_skeleton(source) -> Skeleton:
    """Build a Skeleton from a TOML document.

    ``source`` may be a parsed dict, a TOML string, or a Path to a
    config file. See ``skeleton_to_toml`` for the schema.
    """
    if isinstance(source, dict):
        doc = source
    else:
        if isinstance(source, Path):
            text = source.read_text(encoding="utf-8")
        else:
            text = source
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config does not parse as TOML: {exc}") from exc

    schema = doc.get("schema")
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"schema: expected {CONFIG_SCHEMA}, got {schema!r}")
    for key in ("name", "joints", "parents", "bones"):
        if key not in doc:
            raise ConfigError(f"{key}: missing required field")

    joints = list(doc["joints"])
    index = {n: i for i, n in enumerate(joints)}
    parents = [int(p) for p in doc["parents"]]

    by_child: dict[str, dict] = {}
    for n, entry in enumerate(doc["bones"]):
        child = entry.get("child")
        if child not in index:
            raise ConfigError(f"bones[{n}].child: unknown joint {child!r}")
        if child in by_child:
            raise ConfigError(f"bones[{n}].child: duplicate bone for {child!r}")
        by_child[child] = entry

    frames, rotating, reverse, lengths = [], [], [], []
    bone_children = [joints[c] for c in range(len(joints)) if parents[c] >= 0]
    for k, child in enumerate(bone_children):
        entry = by_child.pop(child, None)
        if entry is None:
            raise ConfigError(f"bones: missing entry for child joint {child!r}")
        frame = entry.get("neutral_frame")
        if frame is None or len(frame) != 9:
            raise ConfigError(
                f"bones[{child!r}].neutral_frame: expected 9 row-major numbers"
            )
        frames.append(np.asarray(frame, dtype=float).reshape(3, 3))
        if entry.get("rotating", True):
            rotating.append(k)
        reverse.append(bool(entry.get("reverse", False)))
        length = entry.get("reference_length_mm")
        if length is None:
            raise ConfigError(f"bones[{child!r}].reference_length_mm: missing")
        lengths.append(float(length))
    if by_child:
        raise ConfigError(f"bones: entries for non-joints or root: {sorted(by_child)}")

    def _resolve(names, field_name):
        out = []
        for n in names:
            if n not in index:
                raise ConfigError(f"{field_name}: unknown joint {n!r}")
            out.append(index[n])
        return out

    flip_pairs = [
        tuple(_resolve(pair, "flip_pairs")) for pair in doc.get("flip_pairs", [])
    ]
    pck = _resolve(doc.get("pck_joints", []), "pck_joints")

    return Skeleton(
        name=doc["name"],
        joints=joints,
        parents=parents,
        neutral_frames=np.stack(frames),
        rotating=rotating,
        reverse_flags=reverse,
        flip_pairs=flip_pairs,
        pck_joints=pck,
        reference_lengths=np.asarray(lengths),
    )


def skeleton_to_toml(skel: Skeleton) -> str:
    """Serialize a Skeleton to its TOML config document."""
    lines = [
        f"schema = {CONFIG_SCHEMA}",
        f'name = "{skel.name}"',
        "",
        "joints = [" + ", ".join(f'"{j}"' for j in skel.joints) + "]",
        "parents = [" + ", ".join(str(p) for p in skel.parents) + "]",
        "",
        "flip_pairs = ["
        + ", ".join(
            f'["{skel.joints[a]}", "{skel.joints[b]}"]' for a, b in skel.flip_pairs
        )
        + "]",
        "pck_joints = [" + ", ".join(f'"{skel.joints[j]}"' for j in skel.pck_joints) + "]",
    ]
    rotating = set(skel.rotating)
    for k, (_, c) in enumerate(skel.bones):
        frame = ", ".join(repr(float(v)) for v in skel.neutral_frames[k].ravel())
        lines += [
            "",
            "[[bones]]",
            f'child = "{skel.joints[c]}"',
            f"rotating = {'true' if k in rotating else 'false'}",
            f"reverse = {'true' if skel.reverse_flags[k] else 'false'}",
            f"reference_length_mm = {float(skel.reference_lengths[k])!r}",
            f"neutral_frame = [{frame}]",
        ]
    return "\n".join(lines) + "\n"
