"""Orientation-keypoint 6D pose toolkit.

Synthesizes virtual orientation markers from bone rotations, recovers
full per-bone rotations from keypoint detections via weighted rigid
alignment, reconstructs joint positions with forward kinematics, and
evaluates with the standard position and rotation metrics.
"""

from .errors import (
    ConfigError,
    CountMismatch,
    DegenerateFrame,
    DegenerateInput,
    EmptyDataset,
    FormatError,
    IncompleteKeypoints,
    OkpError,
    SpaceMismatch,
)
from .geometry import (
    Transform,
    WeightedCorrespondences,
    frame_from_bone_and_forward,
    geodesic_angle,
    geodesic_angles,
    is_rotation,
    random_rotation,
    random_rotations,
    rotation_about_axis,
    umeyama_align,
)
from .skeleton import (
    BUILTIN_SKELETONS,
    GLOBAL,
    LOCAL,
    Pose,
    Skeleton,
    average_bone_lengths,
    bone_global_rotations,
    builtin_skeleton,
    default_bone_lengths,
    forward_kinematics,
    globals_to_locals,
    load_skeleton,
    locals_to_globals,
    neutral_pose,
    skeleton_to_toml,
)
from .markers import (
    NORMALIZED,
    WORLD,
    BoneMarkerTemplate,
    KeypointSet,
    bone_marker_template,
    flip_merge,
    mirror_keypoints,
    okp_block,
    solve_pose,
    synthesize_okps,
)
from .codec import (
    DEFAULT_EXTEND,
    HeatmapTriple,
    bin_centers,
    decode_keypoints,
    denormalize_depth,
    encode_gaussian,
    encode_keypoints,
    normalize_depth,
    read_heatmap_fixture,
    soft_argmax_1d,
    write_heatmap_fixture,
)
from .metrics import (
    GroupMetrics,
    MetricsReport,
    aggregate_frames,
    loss_cnt,
    loss_mpjpe,
    maa,
    mpjas,
    mpjpe,
    pck,
    pmpjpe,
    ppck,
)
from .harness import (
    EvalOptions,
    FrameRecord,
    SensitivityCurve,
    evaluate,
    generate_synthetic_sequence,
    inject_error_scale,
    inject_gaussian_noise,
    read_dataset,
    sensitivity_sweep,
    solve_frames,
    write_dataset,
)

__version__ = "0.1.0"
