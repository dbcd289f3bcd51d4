"""Per-axis 1D heatmap decoding and test-fixture encoding.

A keypoint's position is represented by three independent 1D logit
vectors, one per axis. Decoding is a coordinate-weighted softmax over
symmetric bin centers, optionally stretched by an extension factor so
the decoded range is wider than the nominal image (markers can sit
outside the subject's bounding box).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CountMismatch, FormatError
from .markers import NORMALIZED, KeypointSet

# Heatmaps cover 25% more range than the underlying image.
DEFAULT_EXTEND = 1.25

_MAGIC = b"OKH1"


@dataclass
class HeatmapTriple:
    """One keypoint's per-axis logit vectors; lengths may differ per axis."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.x = _checked_logits(self.x)
        self.y = _checked_logits(self.y)
        self.z = _checked_logits(self.z)


def _checked_logits(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"heatmap must be a 1D vector of length >= 2, got {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("heatmap logits must be finite")
    return v


def bin_centers(n_bins: int) -> np.ndarray:
    """Symmetric bin-center weights: (i + 0.5 - n/2) / (n/2), i = 0..n-1."""
    i = np.arange(n_bins, dtype=float)
    return (i + 0.5 - 0.5 * n_bins) / (0.5 * n_bins)


def soft_argmax_1d(logits, extend: float = 1.0) -> float:
    """Coordinate-weighted softmax of a 1D heatmap.

    Returns extend * sum(softmax(logits) * bin_centers); uniform logits
    decode to exactly 0, and any finite logits decode strictly inside
    (-extend, extend). Softmax subtracts the max logit first so large
    values cannot overflow.
    """
    v = _checked_logits(logits)
    if extend < 1.0:
        raise ValueError("extension factor must be >= 1")
    e = np.exp(v - v.max())
    p = e / e.sum()
    # fsum: the symmetric-weight terms of a uniform heatmap cancel
    # exactly, so flat inputs decode to exactly zero for any bin count.
    return extend * math.fsum(p * bin_centers(v.size))


def decode_keypoints(
    triples, extend: float = DEFAULT_EXTEND, expected_count: int | None = None
) -> KeypointSet:
    """Decode one HeatmapTriple per keypoint into a normalized-space set."""
    triples = list(triples)
    if expected_count is not None and len(triples) != expected_count:
        raise CountMismatch(
            f"expected {expected_count} heatmap triples, got {len(triples)}"
        )
    pts = np.empty((len(triples), 3))
    for i, t in enumerate(triples):
        pts[i] = (
            soft_argmax_1d(t.x, extend),
            soft_argmax_1d(t.y, extend),
            soft_argmax_1d(t.z, extend),
        )
    return KeypointSet(pts, NORMALIZED)


def encode_gaussian(
    coord: float, n_bins: int, sigma_bins: float, extend: float = 1.0
) -> np.ndarray:
    """Gaussian logits peaked at ``coord`` (fixture generator for tests).

    ``coord`` is in decoded units, i.e. [-extend, extend] maps onto the
    bin range; logits are -(i - c)^2 / (2 sigma^2) over bin indices i
    with c the fractional bin position of ``coord``.
    """
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if sigma_bins <= 0.0:
        raise ValueError("sigma_bins must be positive")
    center = (coord / extend + 1.0) * 0.5 * n_bins - 0.5
    i = np.arange(n_bins, dtype=float)
    return -((i - center) ** 2) / (2.0 * sigma_bins**2)


def encode_keypoints(
    points, bins: tuple[int, int, int], sigma_bins: float = 1.0, extend: float = 1.0
) -> list[HeatmapTriple]:
    """Encode (n, 3) coordinates into per-axis Gaussian heatmap triples."""
    points = np.asarray(points, dtype=float)
    nx, ny, nz = bins
    return [
        HeatmapTriple(
            encode_gaussian(px, nx, sigma_bins, extend),
            encode_gaussian(py, ny, sigma_bins, extend),
            encode_gaussian(pz, nz, sigma_bins, extend),
        )
        for px, py, pz in points
    ]


def normalize_depth(z_world: float, root_z: float, scale: float) -> float:
    """Depth relative to the root in units of ``scale`` millimeters."""
    if scale <= 0.0:
        raise ValueError("depth scale must be positive")
    return (z_world - root_z) / scale


def denormalize_depth(z_unit: float, root_z: float, scale: float) -> float:
    """Inverse of normalize_depth."""
    if scale <= 0.0:
        raise ValueError("depth scale must be positive")
    return z_unit * scale + root_z


# ---------------------------------------------------------------------------
# Heatmap fixture files: a little-endian stream of frame records, each
# "OKH1" magic, then keypoint count and per-axis bin counts as uint32,
# then float32 logits in keypoint-major, axis-major (x, y, z) order.
# ---------------------------------------------------------------------------


def write_heatmap_fixture(path, frames: list[list[HeatmapTriple]]) -> None:
    with open(path, "wb") as fh:
        for triples in frames:
            if not triples:
                raise ValueError("cannot write an empty frame")
            nx, ny, nz = triples[0].x.size, triples[0].y.size, triples[0].z.size
            fh.write(_MAGIC)
            fh.write(struct.pack("<4I", len(triples), nx, ny, nz))
            for t in triples:
                if (t.x.size, t.y.size, t.z.size) != (nx, ny, nz):
                    raise ValueError("all triples in a frame must share bin counts")
                for axis in (t.x, t.y, t.z):
                    fh.write(axis.astype("<f4").tobytes())


def read_heatmap_fixture(path) -> list[list[HeatmapTriple]]:
    frames = []
    with open(path, "rb") as fh:
        while True:
            magic = fh.read(4)
            if not magic:
                break
            if magic != _MAGIC:
                raise FormatError(f"bad heatmap fixture magic {magic!r}")
            header = fh.read(16)
            if len(header) != 16:
                raise FormatError("truncated heatmap fixture header")
            count, nx, ny, nz = struct.unpack("<4I", header)
            if count == 0 or min(nx, ny, nz) < 2:
                raise FormatError(
                    f"invalid heatmap fixture header (count={count}, bins={(nx, ny, nz)})"
                )
            per_kp = nx + ny + nz
            raw = fh.read(4 * per_kp * count)
            if len(raw) != 4 * per_kp * count:
                raise FormatError("truncated heatmap fixture payload")
            data = np.frombuffer(raw, dtype="<f4").astype(float)
            triples = []
            for i in range(count):
                base = i * per_kp
                triples.append(
                    HeatmapTriple(
                        data[base : base + nx],
                        data[base + nx : base + nx + ny],
                        data[base + nx + ny : base + per_kp],
                    )
                )
            frames.append(triples)
    return frames
