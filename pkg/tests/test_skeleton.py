"""Tests for the kinematic model, config handling and forward kinematics."""

import numpy as np
import pytest

from okp.errors import ConfigError, EmptyDataset
from okp.geometry import geodesic_angle, random_rotation, rotation_about_axis
from okp.skeleton import (
    GLOBAL,
    LOCAL,
    Pose,
    Skeleton,
    average_bone_lengths,
    builtin_skeleton,
    default_bone_lengths,
    forward_kinematics,
    globals_to_locals,
    load_skeleton,
    locals_to_globals,
    neutral_pose,
    skeleton_to_toml,
)

# Independent copy of the designed T-pose (mm): facing +Z, up +Y,
# subject's left along +X, pelvis at the origin.
TPOSE_POSITIONS = {
    "pelvis": (0, 0, 0),
    "r_hip": (-130, 0, 0),
    "r_knee": (-130, -450, 0),
    "r_ankle": (-130, -900, 0),
    "l_hip": (130, 0, 0),
    "l_knee": (130, -450, 0),
    "l_ankle": (130, -900, 0),
    "spine": (0, 220, 0),
    "thorax": (0, 440, 0),
    "neck": (0, 530, 0),
    "head": (0, 650, 0),
    "l_shoulder": (180, 440, 0),
    "l_elbow": (460, 440, 0),
    "l_wrist": (710, 440, 0),
    "r_shoulder": (-180, 440, 0),
    "r_elbow": (-460, 440, 0),
    "r_wrist": (-710, 440, 0),
}


@pytest.fixture(scope="module")
def skel():
    return builtin_skeleton("h36m17")


@pytest.fixture(scope="module")
def lengths(skel):
    return default_bone_lengths(skel)


def random_pose(skel, rng, root_span=1000.0):
    rots = np.stack(
        [skel.neutral_frames[k] @ random_rotation(rng) for k in skel.rotating]
    )
    return Pose(rng.uniform(-root_span, root_span, 3), rots, GLOBAL)


class TestBuiltins:
    def test_default_counts(self, skel):
        assert skel.n_joints == 17
        assert skel.n_rotations == 15
        assert skel.n_keypoints == 77

    def test_21_joint_variant_counts(self):
        s21 = builtin_skeleton("h36m21")
        assert s21.n_joints == 21
        assert s21.n_rotations == 19
        assert s21.n_keypoints == 21 + 4 * 19

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            builtin_skeleton("nope")

    def test_flip_pairs_are_involution(self, skel):
        flip = skel.joint_flip
        np.testing.assert_array_equal(flip[flip], np.arange(skel.n_joints))

    def test_pck_subset_has_14_joints(self, skel):
        assert len(skel.pck_joints) == 14


class TestForwardKinematics:
    def test_neutral_pose_reproduces_tpose(self, skel, lengths):
        joints = forward_kinematics(skel, neutral_pose(skel), lengths)
        for name, expected in TPOSE_POSITIONS.items():
            np.testing.assert_allclose(
                joints[skel.joints.index(name)], expected, atol=1e-9, err_msg=name
            )

    def test_roll_about_bone_axis_moves_no_joint(self, skel, lengths):
        rng = np.random.default_rng(11)
        pose = random_pose(skel, rng)
        base = forward_kinematics(skel, pose, lengths)
        for slot in range(skel.n_rotations):
            rots = pose.rotations.copy()
            # Roll: rotate about the bone's own axis (local Y).
            rots[slot] = rots[slot] @ rotation_about_axis([0.0, 1.0, 0.0], 0.7)
            rolled = Pose(pose.root_position, rots, GLOBAL)
            moved = forward_kinematics(skel, rolled, lengths)
            assert np.abs(moved - base).max() < 1e-9
            assert geodesic_angle(rots[slot], pose.rotations[slot]) > 0.69

    def test_two_bone_chain_hand_computation(self):
        # hip -> knee -> ankle, both bones pointing straight down.
        down = np.column_stack([[-1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]])
        chain = Skeleton(
            name="chain",
            joints=["hip", "knee", "ankle"],
            parents=[-1, 0, 1],
            neutral_frames=np.stack([down, down]),
            rotating=[0, 1],
            reverse_flags=[True, True],
            flip_pairs=[],
            pck_joints=[0, 1, 2],
            reference_lengths=np.array([450.0, 450.0]),
        )
        lengths = np.array([450.0, 450.0])
        # Swing the lower bone 90 degrees so the ankle points forward (+Z):
        # hand computation gives ankle = knee + (0, 0, 450).
        rx = rotation_about_axis([1.0, 0.0, 0.0], -np.pi / 2)
        pose = Pose(np.zeros(3), np.stack([down, rx @ down]), GLOBAL)
        joints = forward_kinematics(chain, pose, lengths)
        np.testing.assert_allclose(joints[1], [0.0, -450.0, 0.0], atol=1e-9)
        np.testing.assert_allclose(joints[2], [0.0, -450.0, 450.0], atol=1e-9)

    def test_bone_lengths_preserved(self, skel, lengths):
        rng = np.random.default_rng(21)
        for _ in range(20):
            joints = forward_kinematics(skel, random_pose(skel, rng), lengths)
            for k, (p, c) in enumerate(skel.bones):
                assert abs(np.linalg.norm(joints[c] - joints[p]) - lengths[k]) < 1e-9

    def test_equivariance_under_rigid_motion(self, skel, lengths):
        rng = np.random.default_rng(33)
        pose = random_pose(skel, rng)
        q = random_rotation(rng)
        t = rng.uniform(-500, 500, 3)
        moved = Pose(
            q @ pose.root_position + t,
            np.einsum("ij,njk->nik", q, pose.rotations),
            GLOBAL,
        )
        a = forward_kinematics(skel, pose, lengths)
        b = forward_kinematics(skel, moved, lengths)
        np.testing.assert_allclose(b, a @ q.T + t, atol=1e-9)

    def test_rejects_local_pose_and_bad_lengths(self, skel, lengths):
        pose = neutral_pose(skel)
        with pytest.raises(ValueError):
            forward_kinematics(skel, globals_to_locals(skel, pose), lengths)
        with pytest.raises(ValueError):
            forward_kinematics(skel, pose, -lengths)


class TestRotationConventions:
    def test_tpose_locals_are_neutral_offsets(self, skel):
        local = globals_to_locals(skel, neutral_pose(skel))
        assert local.convention == LOCAL
        for i, k in enumerate(skel.rotating):
            pb = skel.parent_bone[k]
            expected = (
                skel.neutral_frames[k]
                if pb < 0
                else skel.neutral_frames[pb].T @ skel.neutral_frames[k]
            )
            np.testing.assert_allclose(local.rotations[i], expected, atol=1e-12)

    def test_single_bone_chain_local_equals_global(self):
        single = Skeleton(
            name="single",
            joints=["a", "b"],
            parents=[-1, 0],
            neutral_frames=np.eye(3)[None],
            rotating=[0],
            reverse_flags=[False],
            flip_pairs=[],
            pck_joints=[0, 1],
            reference_lengths=np.array([100.0]),
        )
        rot = rotation_about_axis([0.3, 1.0, 0.2], 1.1)
        pose = Pose(np.zeros(3), rot[None], GLOBAL)
        local = globals_to_locals(single, pose)
        np.testing.assert_array_equal(local.rotations[0], rot)

    def test_round_trip_identity(self, skel):
        rng = np.random.default_rng(55)
        for _ in range(20):
            pose = random_pose(skel, rng)
            back = locals_to_globals(skel, globals_to_locals(skel, pose))
            assert np.abs(back.rotations - pose.rotations).max() < 1e-12


class TestAnnotationRealignment:
    def test_external_frames_realign_to_bone_convention(self, skel, lengths):
        # Rebuilding a bone frame from joint positions plus an external
        # annotation's forward axis must reproduce the neutral frame in
        # the T-pose, honoring the per-bone reverse flags.
        from okp.geometry import frame_from_bone_and_forward

        joints = forward_kinematics(skel, neutral_pose(skel), lengths)
        for k, (p, c) in enumerate(skel.bones):
            bone_dir = joints[c] - joints[p]
            if skel.reverse_flags[k]:
                bone_dir = -bone_dir
            annotation_forward = skel.neutral_frames[k][:, 2]
            realigned = frame_from_bone_and_forward(
                bone_dir, annotation_forward, reverse=skel.reverse_flags[k]
            )
            np.testing.assert_allclose(
                realigned, skel.neutral_frames[k], atol=1e-9,
                err_msg=skel.joints[c],
            )

    def test_lower_body_flags_cover_the_legs(self, skel):
        reversed_children = {
            skel.joints[c] for k, (_, c) in enumerate(skel.bones) if skel.reverse_flags[k]
        }
        assert reversed_children == {"r_knee", "r_ankle", "l_knee", "l_ankle"}


class TestAverageBoneLengths:
    def test_single_frame_exact(self, skel, lengths):
        joints = forward_kinematics(skel, neutral_pose(skel), lengths)
        np.testing.assert_allclose(average_bone_lengths(skel, [joints]), lengths, atol=1e-9)

    def test_mean_of_two(self):
        single = Skeleton(
            name="single",
            joints=["a", "b"],
            parents=[-1, 0],
            neutral_frames=np.eye(3)[None],
            rotating=[0],
            reverse_flags=[False],
            flip_pairs=[],
            pck_joints=[0],
            reference_lengths=np.array([100.0]),
        )
        f1 = np.array([[0.0, 0, 0], [0, 400.0, 0]])
        f2 = np.array([[0.0, 0, 0], [0, 440.0, 0]])
        np.testing.assert_allclose(average_bone_lengths(single, [f1, f2]), [420.0])

    def test_recovers_generator_lengths(self, skel):
        rng = np.random.default_rng(8)
        true = default_bone_lengths(skel) * rng.uniform(0.8, 1.2, skel.n_bones)
        frames = [
            forward_kinematics(skel, random_pose(skel, rng), true) for _ in range(10)
        ]
        np.testing.assert_allclose(average_bone_lengths(skel, frames), true, atol=1e-9)

    def test_empty_collection(self, skel):
        with pytest.raises(EmptyDataset):
            average_bone_lengths(skel, [])


class TestConfig:
    def test_toml_round_trip(self, skel):
        text = skeleton_to_toml(skel)
        loaded = load_skeleton(text)
        assert loaded.name == skel.name
        assert loaded.joints == skel.joints
        assert loaded.parents == skel.parents
        assert loaded.rotating == skel.rotating
        assert loaded.reverse_flags == skel.reverse_flags
        assert loaded.flip_pairs == skel.flip_pairs
        assert loaded.pck_joints == skel.pck_joints
        np.testing.assert_array_equal(loaded.neutral_frames, skel.neutral_frames)
        np.testing.assert_array_equal(loaded.reference_lengths, skel.reference_lengths)

    def test_self_parenting_rejected(self):
        with pytest.raises(ConfigError):
            Skeleton(
                name="bad",
                joints=["a", "b"],
                parents=[-1, 1],
                neutral_frames=np.eye(3)[None],
                rotating=[0],
                reverse_flags=[False],
                flip_pairs=[],
                pck_joints=[],
                reference_lengths=np.array([1.0]),
            )

    def test_two_roots_rejected(self):
        with pytest.raises(ConfigError):
            Skeleton(
                name="bad",
                joints=["a", "b", "c"],
                parents=[-1, -1, 0],
                neutral_frames=np.stack([np.eye(3)] * 2),
                rotating=[0],
                reverse_flags=[False, False],
                flip_pairs=[],
                pck_joints=[],
                reference_lengths=np.array([1.0, 1.0]),
            )

    def test_non_orthonormal_frame_rejected(self):
        with pytest.raises(ConfigError, match="neutral_frame"):
            Skeleton(
                name="bad",
                joints=["a", "b"],
                parents=[-1, 0],
                neutral_frames=(np.eye(3) * 1.5)[None],
                rotating=[0],
                reverse_flags=[False],
                flip_pairs=[],
                pck_joints=[],
                reference_lengths=np.array([1.0]),
            )

    def test_bad_flip_pair_rejected(self, skel):
        with pytest.raises(ConfigError, match="flip_pairs"):
            Skeleton(
                name="bad",
                joints=list(skel.joints),
                parents=list(skel.parents),
                neutral_frames=skel.neutral_frames,
                rotating=list(skel.rotating),
                reverse_flags=list(skel.reverse_flags),
                flip_pairs=[(1, 4), (1, 5)],
                pck_joints=[],
                reference_lengths=skel.reference_lengths,
            )

    def test_config_text_errors(self, skel):
        with pytest.raises(ConfigError, match="schema"):
            load_skeleton("name = 'x'")
        text = skeleton_to_toml(skel).replace('"r_knee"', '"r_knee_typo"', 1)
        with pytest.raises(ConfigError):
            load_skeleton(text)
        with pytest.raises(ConfigError, match="TOML"):
            load_skeleton("schema = [unclosed")
