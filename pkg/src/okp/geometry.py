"""Rotation geometry and weighted rigid/similarity alignment.

Conventions:
- Rotation matrices are 3x3, proper (det = +1), and act on column
  vectors: p' = R @ p.
- Frames are stored column-wise: the columns of a frame matrix are its
  X, Y, Z axes expressed in the enclosing coordinate system.
- Angles are radians, geodesic distances lie in [0, pi].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame, DegenerateInput

# Library-wide max-norm tolerance for accepting a matrix as a rotation.
ROTATION_ATOL = 1e-6

# Below this weighted variance (squared source units) a point set is
# treated as collapsed/collinear and cannot anchor an alignment.
DEGENERATE_VARIANCE = 1e-12


def is_rotation(r: np.ndarray, atol: float = ROTATION_ATOL) -> bool:
    """Check R for orthonormality (max-norm) and det(R) = +1."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.isfinite(r).all():
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > atol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= atol


def require_rotation(r: np.ndarray, name: str = "rotation") -> np.ndarray:
    """Return R as a float array, raising ValueError if it is not in SO(3)."""
    r = np.asarray(r, dtype=float)
    if not is_rotation(r):
        raise ValueError(f"{name} is not a proper rotation matrix")
    return r


def require_rotations(rs: np.ndarray, name: str = "rotations") -> np.ndarray:
    """Validate a stack of rotations with shape (n, 3, 3)."""
    rs = np.asarray(rs, dtype=float)
    if rs.ndim != 3 or rs.shape[1:] != (3, 3):
        raise ValueError(f"{name} must have shape (n, 3, 3), got {rs.shape}")
    if not np.isfinite(rs).all():
        raise ValueError(f"{name} contains non-finite entries")
    gram = np.einsum("nij,nkj->nik", rs, rs)
    if np.max(np.abs(gram - np.eye(3))) > ROTATION_ATOL:
        raise ValueError(f"{name} contains a non-orthonormal matrix")
    if np.max(np.abs(np.linalg.det(rs) - 1.0)) > ROTATION_ATOL:
        raise ValueError(f"{name} contains an improper rotation")
    return rs


@dataclass(frozen=True)
class Transform:
    """Similarity transform: p -> scale * rotation @ p + translation.

    ``scale`` is 1.0 for rigid transforms. ``translation`` is in the
    units of the target space.
    """

    rotation: np.ndarray
    translation: np.ndarray
    scale: float = 1.0

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.scale * pts @ self.rotation.T + self.translation


@dataclass(frozen=True)
class WeightedCorrespondences:
    """Paired source/target 3D points with strictly positive weights."""

    source: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


def umeyama_align(corr: WeightedCorrespondences, with_scale: bool = False) -> Transform:
    """Least-squares alignment of source points onto target points.

    Finds the rotation R (optionally scale s) and translation t that
    minimize sum_i w_i * ||target_i - (s * R @ source_i + t)||^2 in
    closed form via the SVD of the weighted cross-covariance. The
    returned rotation is always proper: the sign of the smallest
    singular direction is corrected so reflections are never produced,
    even for coplanar or mirrored targets.

    Weights act relatively; scaling all weights by a common factor
    leaves the result unchanged.

    Raises DegenerateInput for fewer than 3 pairs, non-positive
    weights, or a collapsed source set.
    """
    src, tgt, w = corr.source, corr.target, corr.weights
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != tgt.shape:
        raise DegenerateInput(
            f"source/target must both be (n, 3), got {src.shape} and {tgt.shape}"
        )
    n = src.shape[0]
    if w.shape != (n,):
        raise DegenerateInput(f"weights must have shape ({n},), got {w.shape}")
    if n < 3:
        raise DegenerateInput(f"need at least 3 correspondences, got {n}")
    if not (np.isfinite(src).all() and np.isfinite(tgt).all() and np.isfinite(w).all()):
        raise DegenerateInput("correspondences contain non-finite values")
    if np.any(w <= 0.0):
        raise DegenerateInput("weights must be strictly positive")

    wn = w / w.sum()
    src_mean = wn @ src
    tgt_mean = wn @ tgt
    src_c = src - src_mean
    tgt_c = tgt - tgt_mean

    src_var = float(np.sum(wn * np.einsum("ij,ij->i", src_c, src_c)))
    if src_var < DEGENERATE_VARIANCE:
        raise DegenerateInput("source points are collapsed (weighted variance ~ 0)")

    # Weighted cross-covariance mapping source directions to target directions.
    cov = (tgt_c * wn[:, None]).T @ src_c
    u, s, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u @ vt) < 0.0:
        d[2] = -1.0
    rot = (u * d) @ vt

    scale = float(np.sum(s * d) / src_var) if with_scale else 1.0
    trans = tgt_mean - scale * rot @ src_mean
    return Transform(rotation=rot, translation=trans, scale=scale)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic distance between two rotations, in [0, pi] radians.

    The angle of the axis-angle form of a @ b.T. For r = a @ b.T this
    is atan2 of the antisymmetric-part magnitude against the trace:
    theta = atan2(||r - r.T||_F / (2 sqrt(2)), (trace(r) - 1) / 2),
    identical to arccos((trace(r) - 1) / 2) in exact arithmetic but
    precise near zero, where the pure arccos form bottoms out around
    1e-8. Inputs are validated as proper rotations.
    """
    a = require_rotation(a, "a")
    b = require_rotation(b, "b")
    r = a @ b.T
    sin = np.linalg.norm(r - r.T) / (2.0 * np.sqrt(2.0))
    cos = (np.trace(r) - 1.0) / 2.0
    return float(np.arctan2(sin, cos))


def geodesic_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized geodesic_angle over stacks shaped (n, 3, 3)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.einsum("nij,nkj->nik", a, b)
    anti = r - np.transpose(r, (0, 2, 1))
    sin = np.sqrt(np.einsum("nij,nij->n", anti, anti)) / (2.0 * np.sqrt(2.0))
    cos = (np.einsum("nii->n", r) - 1.0) / 2.0
    return np.arctan2(sin, cos)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Draw one rotation from the uniform (Haar) distribution on SO(3)."""
    return random_rotations(rng, 1)[0]


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw (n, 3, 3) Haar-uniform rotations via random unit quaternions."""
    u1, u2, u3 = rng.random((3, n))
    r1 = np.sqrt(1.0 - u1)
    r2 = np.sqrt(u1)
    t1 = 2.0 * np.pi * u2
    t2 = 2.0 * np.pi * u3
    q = np.stack(
        [np.cos(t2) * r2, np.sin(t1) * r1, np.cos(t1) * r1, np.sin(t2) * r2],
        axis=1,
    )
    return _quaternions_to_matrices(q)


def _quaternions_to_matrices(q: np.ndarray) -> np.ndarray:
    # q rows are unit quaternions (w, x, y, z)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((q.shape[0], 3, 3))
    out[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[:, 0, 1] = 2.0 * (x * y - w * z)
    out[:, 0, 2] = 2.0 * (x * z + w * y)
    out[:, 1, 0] = 2.0 * (x * y + w * z)
    out[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[:, 1, 2] = 2.0 * (y * z - w * x)
    out[:, 2, 0] = 2.0 * (x * z - w * y)
    out[:, 2, 1] = 2.0 * (y * z + w * x)
    out[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about an arbitrary (non-zero) axis."""
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise DegenerateFrame("rotation axis has (near-)zero length")
    x, y, z = axis / norm
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def frame_from_bone_and_forward(
    bone_dir: np.ndarray, forward_hint: np.ndarray, reverse: bool = False
) -> np.ndarray:
    """Build an orthonormal frame from a bone direction and a forward hint.

    Column Y is the normalized bone direction (negated when ``reverse``
    is set, the convention used for lower-body bones when realigning
    external rotation annotations). Column Z is the forward hint
    orthogonalized against Y and normalized; column X = Y x Z closes a
    right-handed frame.

    Raises DegenerateFrame when either input is (near-)zero or the two
    are (anti)parallel.
    """
    y = np.asarray(bone_dir, dtype=float)
    f = np.asarray(forward_hint, dtype=float)
    ny = np.linalg.norm(y)
    nf = np.linalg.norm(f)
    if ny < 1e-12 or nf < 1e-12:
        raise DegenerateFrame("bone direction and forward hint must be non-zero")
    y = y / ny
    if reverse:
        y = -y
    z = f / nf
    z = z - (z @ y) * y
    nz = np.linalg.norm(z)
    if nz < 1e-6:
        raise DegenerateFrame("bone direction and forward hint are (anti)parallel")
    z = z / nz
    x = np.cross(y, z)
    return np.column_stack([x, y, z])
