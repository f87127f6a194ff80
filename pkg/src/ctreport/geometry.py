"""PCA principal axes and rigid voxel-grid alignment.

All geometry runs in millimeter coordinates: the voxel (i, j, k) has
center ((i+.5)dx, (j+.5)dy, (k+.5)dz) with the grid corner at the
origin. A RigidTransform maps source mm coordinates to aligned mm
coordinates as p' = R p + t; its inverse is closed-form, so round
trips are exact up to nearest-neighbor quantization of the masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud, EmptyInput
from .volume import Mask, Spacing

# fixed seed for the PCA voxel subsample; determinism only, no tuning
PCA_SAMPLE_SEED = 91
PCA_MAX_POINTS = 100_000

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation in mm, p_aligned = R @ p_source + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


@dataclass
class AlignedMask:
    """Mask resampled into a rotated frame plus the transform used."""

    mask: Mask
    transform: RigidTransform
    source_dims: tuple[int, int, int]


def mask_points_mm(m: Mask, max_points: int | None = None) -> np.ndarray:
    """Voxel centers (mm) of all set voxels, optionally subsampled.

    Subsampling is a seeded uniform choice, so results are stable.
    """
    idx = np.argwhere(m.bits)
    if idx.size == 0:
        raise EmptyInput(f"mask {m.label!r} is empty")
    if max_points is not None and len(idx) > max_points:
        rng = np.random.Generator(np.random.Philox(key=PCA_SAMPLE_SEED))
        sel = rng.choice(len(idx), size=max_points, replace=False)
        idx = idx[np.sort(sel)]
    return (idx + 0.5) * m.spacing.as_array()


def principal_axis(points: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the covariance with the largest eigenvalue.

    Sign is fixed so the largest-magnitude component is positive.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
        raise DegenerateCloud("need at least 2 points")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    if not cov.any():
        raise DegenerateCloud("all points coincide")
    w, v = np.linalg.eigh(cov)
    axis = v[:, np.argmax(w)]
    k = int(np.argmax(np.abs(axis)))
    if axis[k] < 0:
        axis = -axis
    return axis


def rotation_to_x(axis: np.ndarray) -> np.ndarray:
    """Proper rotation matrix sending ``axis`` to (1, 0, 0)."""
    v = np.asarray(axis, dtype=np.float64)
    v = v / np.linalg.norm(v)
    ex = np.array([1.0, 0.0, 0.0])
    c = float(v @ ex)
    if c > 1 - 1e-12:
        return np.eye(3)
    if c < -1 + 1e-12:
        return np.diag([-1.0, -1.0, 1.0])  # pi about z
    k = np.cross(v, ex)
    s = np.linalg.norm(k)
    k = k / s
    kmat = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * kmat + (1 - c) * (kmat @ kmat)


def _volume_corners_mm(dims, spacing: Spacing) -> np.ndarray:
    ext = np.array(dims) * spacing.as_array()
    return np.array(
        [[x, y, z] for x in (0, ext[0]) for y in (0, ext[1]) for z in (0, ext[2])]
    )


def make_alignment(m: Mask, axis: np.ndarray) -> tuple[RigidTransform, tuple[int, int, int]]:
    """Transform rotating ``axis`` to x about the mask's center of mass.

    The output grid is padded to contain the rotated full-volume box;
    returns the transform and the padded grid dims (same spacing).
    """
    sp = m.spacing.as_array()
    idx = np.argwhere(m.bits)
    if idx.size == 0:
        raise EmptyInput(f"mask {m.label!r} is empty")
    center = (idx.mean(axis=0) + 0.5) * sp
    rot = rotation_to_x(axis)
    corners = _volume_corners_mm(m.dims, m.spacing)
    rotated = (corners - center) @ rot.T + center
    lo = rotated.min(axis=0)
    hi = rotated.max(axis=0)
    t = center - rot @ center - lo
    out_dims = tuple(int(np.ceil((h - l) / s - 1e-9)) for h, l, s in zip(hi, lo, sp))
    return RigidTransform(rot, t), out_dims


def apply_forward(t: RigidTransform, m: Mask, target_dims) -> Mask:
    """Resample a source-frame mask onto the aligned grid (NN pullback)."""
    return _pullback(m, t.apply_inverse, target_dims)


def apply_inverse(t: RigidTransform, m: Mask, target_dims) -> Mask:
    """Resample an aligned-frame mask back onto the source grid."""
    return _pullback(m, t.apply, target_dims)


def _pullback(src: Mask, out_to_src, target_dims) -> Mask:
    sp = src.spacing.as_array()
    nx, ny, nz = target_dims
    gi, gj, gk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij", sparse=False
    )
    centers = np.stack([gi, gj, gk], axis=-1).reshape(-1, 3)
    pts = out_to_src((centers + 0.5) * sp)
    idx = np.floor(pts / sp).astype(np.intp)
    inside = np.all((idx >= 0) & (idx < np.array(src.dims)), axis=1)
    bits = np.zeros(len(centers), dtype=bool)
    sel = idx[inside]
    bits[inside] = src.bits[sel[:, 0], sel[:, 1], sel[:, 2]]
    return Mask(bits.reshape(target_dims), src.spacing, src.label, src.affine)


def align_to_x(m: Mask, axis: np.ndarray | None = None) -> AlignedMask:
    """Rotate the mask so its principal axis lies along x.

    ``axis`` overrides the PCA direction (used when a companion
    structure, e.g. a skeleton, defines the orientation).
    """
    if m.is_empty():
        raise EmptyInput(f"mask {m.label!r} is empty")
    if axis is None:
        axis = principal_axis(mask_points_mm(m, PCA_MAX_POINTS))
    transform, out_dims = make_alignment(m, axis)
    aligned = apply_forward(transform, m, out_dims)
    return AlignedMask(aligned, transform, m.dims)


def project_extent(m: Mask, axis: str) -> tuple[float, float, float]:
    """Min/max/midpoint of voxel-center coordinates along an axis (mm)."""
    a = _AXES[axis]
    idx = np.nonzero(m.bits.any(axis=tuple(i for i in range(3) if i != a)))[0]
    if idx.size == 0:
        raise EmptyInput(f"mask {m.label!r} is empty")
    step = m.spacing.as_array()[a]
    lo = (idx.min() + 0.5) * step
    hi = (idx.max() + 0.5) * step
    return float(lo), float(hi), float((lo + hi) / 2)
