"""WHO two-diameter tumor measurement, volume, and attenuation.

Sizes come from the mask resampled to 1 mm isotropic: per axial slice
the border diameter D_s is the longest segment between border voxels,
the reporting slice maximizes D_s, and d is the support width normal to
D. Distances between voxel centers are extended by one voxel pitch so
the calipers touch the outer voxel faces; a single voxel therefore
measures 0.1 x 0.1 cm instead of 0. Attenuation and volume always use
the native grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import EmptyInstance, EmptyMask
from .morphology import connected_components, slice_border
from .volume import Mask, Spacing, Volume, physical_volume_mm3, require_coregistered

ISO_MM = Spacing(1.0, 1.0, 1.0)

# border sets larger than this go through the convex hull first;
# the hull vertices always contain the diameter endpoints, so the
# result is identical to the exhaustive search
EXHAUSTIVE_LIMIT = 400


@dataclass(frozen=True)
class TumorMeasurement:
    """Size, slice, volume, and attenuation of one tumor instance."""

    D_max_cm: float
    d_perp_cm: float
    slice_index: int
    volume_cm3: float
    hu_mean: float | None = None
    hu_std: float | None = None

    def __post_init__(self):
        if self.d_perp_cm > self.D_max_cm:
            raise ValueError("perpendicular diameter exceeds the main diameter")


@dataclass
class TumorInstance:
    """One 26-connected tumor component."""

    mask: Mask
    organ: str
    instance_id: int


def split_instances(tumor_mask: Mask, organ: str) -> list[TumorInstance]:
    """Split a tumor mask into per-component instances.

    Ordered by descending voxel count; equal sizes keep the
    lexicographic-minimum-voxel order of the labeling.
    """
    cc = connected_components(tumor_mask.bits, 26)
    order = sorted(range(1, cc.count + 1), key=lambda k: (-cc.sizes[k], k))
    out = []
    for rank, k in enumerate(order, start=1):
        inst_mask = tumor_mask.with_bits(cc.component(k))
        out.append(TumorInstance(inst_mask, organ, rank))
    return out


def max_pairwise_distance(points: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Longest segment between any two points (exact).

    Uses the convex hull for large sets; falls back to the O(n^2)
    search for small or degenerate ones.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 1:
        return 0.0, pts[0], pts[0]
    if len(pts) > EXHAUSTIVE_LIMIT:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass  # collinear input, n^2 on the raw set is fine
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    return float(np.sqrt(d2[i, j])), pts[i], pts[j]


def _support_width(points: np.ndarray, direction: np.ndarray) -> float:
    """Extent of the point set along the unit normal of ``direction``."""
    normal = np.array([-direction[1], direction[0]])
    proj = points @ normal
    return float(proj.max() - proj.min())


def measure_who(inst: TumorInstance, target: Spacing = ISO_MM) -> TumorMeasurement:
    """Measure one instance per the WHO two-diameter standard."""
    from .volume import resample_isotropic

    if inst.mask.is_empty():
        raise EmptyInstance(f"instance {inst.instance_id} of {inst.organ} is empty")
    if not (target.dx == target.dy == target.dz):
        raise ValueError("measurement grid must be isotropic")
    iso = resample_isotropic(inst.mask, target)
    pitch = target.dx

    best = None  # (D_mm, z, border pts, endpoints)
    nz = iso.bits.shape[2]
    for z in range(nz):
        sl = iso.bits[:, :, z]
        if not sl.any():
            continue
        border = np.argwhere(slice_border(sl)).astype(np.float64)
        dist, p, q = max_pairwise_distance(border)
        if best is None or dist > best[0]:
            best = (dist, z, border, p, q)
    assert best is not None
    dist, z_iso, border, p, q = best

    if dist == 0.0:
        d_mm = D_mm = pitch
    else:
        direction = (q - p) / dist
        D_mm = (dist + 1.0) * pitch
        d_mm = (_support_width(border, direction) + 1.0) * pitch
    d_mm = min(d_mm, D_mm)

    native_dz = inst.mask.spacing.dz
    slice_native = int(np.clip((z_iso + 0.5) * target.dz // native_dz, 0, inst.mask.dims[2] - 1))
    return TumorMeasurement(
        D_max_cm=round(D_mm / 10.0, 1),
        d_perp_cm=round(d_mm / 10.0, 1),
        slice_index=slice_native,
        volume_cm3=physical_volume(inst.mask),
    )


def physical_volume(m: Mask) -> float:
    """Masked volume in cm^3, reported to 3 decimals."""
    return round(physical_volume_mm3(m) / 1000.0, 3)


def attenuation_stats(v: Volume, m: Mask) -> tuple[float, float]:
    """Mean and population std of HU over the masked voxels (native grid)."""
    require_coregistered(v, m)
    if m.is_empty():
        raise EmptyMask(f"mask {m.label!r} is empty")
    values = v.data[m.bits].astype(np.float64)
    return round(float(values.mean()), 2), round(float(values.std()), 2)


def with_attenuation(meas: TumorMeasurement, v: Volume, m: Mask) -> TumorMeasurement:
    mean, std = attenuation_stats(v, m)
    return replace(meas, hu_mean=mean, hu_std=std)
