"""Volume and mask containers plus isotropic resampling.

Arrays are indexed ``[x, y, z]`` with shape ``(nx, ny, nz)``; the axial
slice at index ``z`` is ``data[:, :, z]``. The voxel with index ``i``
along an axis spans the physical interval ``[i*s, (i+1)*s)`` mm and has
its center at ``(i + 0.5) * s``, with the grid corner at 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import EmptyMask


@dataclass(frozen=True)
class Spacing:
    """Voxel pitch in millimeters along x, y, z."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for v in (self.dx, self.dy, self.dz):
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"spacing components must be positive finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz], dtype=np.float64)

    @property
    def voxel_volume_mm3(self) -> float:
        return self.dx * self.dy * self.dz


def _check_affine(affine: np.ndarray) -> np.ndarray:
    affine = np.asarray(affine, dtype=np.float64)
    if affine.shape != (4, 4):
        raise ValueError("affine must be 4x4")
    if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
        raise ValueError("affine must be invertible")
    return affine


def _is_orthogonal_affine(affine: np.ndarray) -> bool:
    # axis-aligned up to sign: each column of the 3x3 block has one nonzero entry
    block = np.abs(affine[:3, :3])
    return all((col > 1e-6 * col.max()).sum() == 1 for col in block.T if col.max() > 0)


@dataclass
class Volume:
    """3D grid of HU values with spacing and affine metadata."""

    data: np.ndarray  # float or int, shape (nx, ny, nz)
    spacing: Spacing
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        if np.issubdtype(self.data.dtype, np.floating) and not np.isfinite(self.data).all():
            raise ValueError("HU values must be finite")
        self.affine = _check_affine(self.affine)
        if not _is_orthogonal_affine(self.affine):
            warnings.warn(
                "non-orthogonal affine: axes are assumed axis-aligned, "
                "affine is kept as metadata only",
                stacklevel=3,
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class Mask:
    """Binary grid co-registered with a companion Volume."""

    bits: np.ndarray  # bool, shape (nx, ny, nz)
    spacing: Spacing
    label: str
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 3:
            raise ValueError(f"mask bits must be 3D, got shape {self.bits.shape}")
        if not self.label:
            raise ValueError("mask label must be non-empty")
        self.affine = _check_affine(self.affine)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def with_bits(self, bits: np.ndarray, label: str | None = None) -> "Mask":
        return Mask(bits, self.spacing, label or self.label, self.affine)


def physical_volume_mm3(m: Mask) -> float:
    """Total masked volume in mm^3."""
    return m.count() * m.spacing.voxel_volume_mm3


def _resample_dims(dims, old: Spacing, new: Spacing) -> tuple[int, int, int]:
    o, n = old.as_array(), new.as_array()
    return tuple(int(np.ceil(d * oo / nn)) for d, oo, nn in zip(dims, o, n))


def _source_indices(n_new: int, old: float, new: float, n_old: int) -> np.ndarray:
    # target voxel centers mapped onto the source grid, both corners coincident
    centers = (np.arange(n_new) + 0.5) * new
    idx = np.floor(centers / old).astype(np.intp)
    return np.clip(idx, 0, n_old - 1)


def resample_isotropic(m: Mask, target: Spacing) -> Mask:
    """Nearest-neighbor resampling of a mask onto a new spacing.

    Output dims are ``ceil(n * old / new)`` per axis; both grids share
    the origin corner. Empty masks resample to empty masks.
    """
    new_dims = _resample_dims(m.dims, m.spacing, target)
    ix = _source_indices(new_dims[0], m.spacing.dx, target.dx, m.dims[0])
    iy = _source_indices(new_dims[1], m.spacing.dy, target.dy, m.dims[1])
    iz = _source_indices(new_dims[2], m.spacing.dz, target.dz, m.dims[2])
    bits = m.bits[np.ix_(ix, iy, iz)]
    return Mask(bits, target, m.label, m.affine)


def resample_volume_isotropic(v: Volume, target: Spacing) -> Volume:
    """Trilinear resampling of an HU volume onto a new spacing."""
    new_dims = _resample_dims(v.dims, v.spacing, target)
    old = v.spacing.as_array()
    new = target.as_array()
    axes = [((np.arange(n) + 0.5) * new[a]) / old[a] - 0.5 for a, n in enumerate(new_dims)]
    coords = np.meshgrid(*axes, indexing="ij")
    data = map_coordinates(v.data.astype(np.float64), coords, order=1, mode="nearest")
    return Volume(data, target, v.affine)


def require_coregistered(*items) -> None:
    """Raise if dims or spacing differ between volumes/masks."""
    dims = {i.dims for i in items}
    spac = {i.spacing for i in items}
    if len(dims) > 1 or len(spac) > 1:
        raise ValueError(f"inputs are not co-registered: dims={dims}, spacing={spac}")


def require_nonempty(m: Mask, err=EmptyMask) -> None:
    if m.is_empty():
        raise err(f"mask {m.label!r} is empty")
