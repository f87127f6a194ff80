"""Pancreas head/body/tail partition and tumor localization.

The head/body boundary is the x-plane at the midpoint of the SMA's
x-projection after the pancreas (and SMA with it) is PCA-aligned to the
x-axis. The body/tail boundary is the x-midpoint of the remaining
pancreas. A tail-to-head slice sweep then reclassifies in-slice
components that are not connected to the body chain as head, which
catches head lobes dipping across the SMA plane. Every native pancreas
voxel is labeled exactly once by mapping its center into the aligned
frame, so the partition is exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, SubsegmentationUnavailable
from .geometry import (
    PCA_MAX_POINTS,
    apply_forward,
    make_alignment,
    mask_points_mm,
    principal_axis,
    project_extent,
)
from .morphology import connected_components, dilate_bits, box
from .volume import Mask, require_coregistered

HEAD_IS_LOW_X = "head_is_low_x"
HEAD_IS_HIGH_X = "head_is_high_x"

HEAD, BODY, TAIL = 1, 2, 3


@dataclass
class PancreasSubsegments:
    head: Mask
    body: Mask
    tail: Mask
    head_body_x_mm: float
    body_tail_x_mm: float
    orientation: str


@dataclass
class SubsegmentMap:
    """Named, disjoint sub-segment masks of one organ."""

    organ: str
    segments: list[tuple[str, Mask]] = field(default_factory=list)

    def validate_against(self, organ_mask: Mask) -> None:
        total = np.zeros(organ_mask.dims, dtype=np.int32)
        for _, m in self.segments:
            require_coregistered(organ_mask, m)
            total += m.bits
        if (total > 1).any():
            raise ValueError(f"{self.organ} sub-segments overlap")
        if not ((total == 1) == organ_mask.bits).all():
            raise ValueError(f"{self.organ} sub-segments do not partition the organ")


def orient_head(pancreas_aligned: Mask, sma_aligned: Mask) -> str:
    """Pick the head side of the SMA-midpoint plane.

    The head is the bulkier half near the plane: compare pancreas
    cross-sectional voxel counts in a window of half the SMA x-extent
    (at least 3 slices) on each side. Ties go to the side of the SMA
    centroid.
    """
    lo, hi, mid = project_extent(sma_aligned, "x")
    dx = pancreas_aligned.spacing.dx
    plane = mid / dx - 0.5  # fractional slice index of the plane
    window = max(3, int(round((hi - lo) / (2 * dx))))
    nx = pancreas_aligned.dims[0]
    counts = pancreas_aligned.bits.sum(axis=(1, 2))
    idx = np.arange(nx)
    low = counts[(idx < plane) & (idx >= plane - window)].sum()
    high = counts[(idx > plane) & (idx <= plane + window)].sum()
    if low > high:
        return HEAD_IS_LOW_X
    if high > low:
        return HEAD_IS_HIGH_X
    sma_centroid = np.argwhere(sma_aligned.bits)[:, 0].mean()
    return HEAD_IS_LOW_X if sma_centroid < plane else HEAD_IS_HIGH_X


def _sweep_reclassify(bits: np.ndarray, head_slices: np.ndarray, from_high: bool) -> np.ndarray:
    """Tail-to-head sweep: disconnected non-head components become head.

    ``head_slices`` flags x-slices already classified head by the plane;
    the sweep covers the rest. Returns a boolean array of voxels to move
    to the head. Components touch across slices under 8-neighborhood
    in-plane tolerance (one-voxel lateral drift allowed).
    """
    nx = bits.shape[0]
    order = range(nx - 1, -1, -1) if from_high else range(nx)
    reclass = np.zeros_like(bits)
    prev = None
    se2 = box(3, ndim=2)
    for x in order:
        if head_slices[x]:
            continue
        sl = bits[x]
        if not sl.any():
            continue
        cc = connected_components(sl, 8)
        if prev is None:
            prev = sl.copy()
            continue
        reach = dilate_bits(prev, se2)
        keep = np.zeros_like(sl)
        for k in range(1, cc.count + 1):
            comp = cc.component(k)
            if (comp & reach).any():
                keep |= comp
            else:
                reclass[x] |= comp
        if keep.any():
            prev = keep
    return reclass


def subsegment_pancreas(pancreas: Mask, sma: Mask) -> PancreasSubsegments:
    """Partition the pancreas into head/body/tail using the SMA landmark."""
    require_coregistered(pancreas, sma)
    if pancreas.is_empty():
        raise EmptyInput("pancreas mask is empty")
    if sma.is_empty():
        raise SubsegmentationUnavailable("SMA mask is empty")

    # drop SMA voxels inferior to the pancreas
    z_min = int(np.argwhere(pancreas.bits)[:, 2].min())
    sma_bits = sma.bits.copy()
    sma_bits[:, :, :z_min] = False
    if not sma_bits.any():
        raise SubsegmentationUnavailable("no SMA voxels at or above the pancreas")
    sma_cut = sma.with_bits(sma_bits)

    axis = principal_axis(mask_points_mm(pancreas, PCA_MAX_POINTS))
    transform, out_dims = make_alignment(pancreas, axis)
    pan_al = apply_forward(transform, pancreas, out_dims)
    sma_al = apply_forward(transform, sma_cut, out_dims)
    if sma_al.is_empty() or pan_al.is_empty():
        raise SubsegmentationUnavailable("alignment left no SMA voxels to project")

    dx = pancreas.spacing.dx
    _, _, head_plane_mm = project_extent(sma_al, "x")
    orientation = orient_head(pan_al, sma_al)
    head_low = orientation == HEAD_IS_LOW_X

    nx = pan_al.dims[0]
    centers_x = (np.arange(nx) + 0.5) * dx
    head_slices = centers_x <= head_plane_mm if head_low else centers_x >= head_plane_mm

    rest_counts = pan_al.bits.sum(axis=(1, 2)) * ~head_slices
    rest_idx = np.nonzero(rest_counts)[0]
    if rest_idx.size == 0:
        tail_plane_mm = head_plane_mm
        body_slices = np.zeros(nx, dtype=bool)
        tail_slices = np.zeros(nx, dtype=bool)
    else:
        lo = centers_x[rest_idx.min()]
        hi = centers_x[rest_idx.max()]
        tail_plane_mm = (lo + hi) / 2.0
        on_body_side = centers_x >= tail_plane_mm if head_low else centers_x <= tail_plane_mm
        body_slices = ~head_slices & on_body_side
        tail_slices = ~head_slices & ~on_body_side

    reclass = _sweep_reclassify(pan_al.bits, head_slices, from_high=head_low)

    labels_al = np.zeros(pan_al.dims, dtype=np.uint8)
    labels_al[pan_al.bits & head_slices[:, None, None]] = HEAD
    labels_al[pan_al.bits & body_slices[:, None, None]] = BODY
    labels_al[pan_al.bits & tail_slices[:, None, None]] = TAIL
    labels_al[reclass] = HEAD

    # exact native partition: label every pancreas voxel via its aligned position
    native_idx = np.argwhere(pancreas.bits)
    sp = pancreas.spacing.as_array()
    aligned_pts = transform.apply((native_idx + 0.5) * sp)
    al_idx = np.floor(aligned_pts / sp).astype(np.intp)
    inside = np.all((al_idx >= 0) & (al_idx < np.array(pan_al.dims)), axis=1)
    lab = np.zeros(len(native_idx), dtype=np.uint8)
    sel = al_idx[inside]
    lab[inside] = labels_al[sel[:, 0], sel[:, 1], sel[:, 2]]

    # voxels whose aligned cell is background fall back to the plane rule
    fallback = lab == 0
    if fallback.any():
        x_mm = aligned_pts[fallback, 0]
        is_head = x_mm <= head_plane_mm if head_low else x_mm >= head_plane_mm
        on_body = x_mm >= tail_plane_mm if head_low else x_mm <= tail_plane_mm
        lab[fallback] = np.where(is_head, HEAD, np.where(on_body, BODY, TAIL))

    out = {}
    for name, code in (("head", HEAD), ("body", BODY), ("tail", TAIL)):
        bits = np.zeros(pancreas.dims, dtype=bool)
        pick = native_idx[lab == code]
        bits[pick[:, 0], pick[:, 1], pick[:, 2]] = True
        out[name] = Mask(bits, pancreas.spacing, f"pancreas_{name}", pancreas.affine)
    return PancreasSubsegments(
        out["head"], out["body"], out["tail"],
        head_body_x_mm=float(head_plane_mm),
        body_tail_x_mm=float(tail_plane_mm),
        orientation=orientation,
    )


def pancreas_segment_map(sub: PancreasSubsegments) -> SubsegmentMap:
    return SubsegmentMap(
        "pancreas", [("head", sub.head), ("body", sub.body), ("tail", sub.tail)]
    )


def liver_segment_map(masks: dict[str, Mask]) -> SubsegmentMap | None:
    """Collect liver_segment_1..8 masks when present."""
    segments = []
    for k in range(1, 9):
        name = f"liver_segment_{k}"
        if name in masks:
            segments.append((f"segment {k}", masks[name]))
    if not segments:
        return None
    return SubsegmentMap("liver", segments)


def localize_tumor(inst_mask: Mask, segmap: SubsegmentMap) -> list[tuple[str, float]]:
    """Sub-segments intersecting the tumor, by descending overlap fraction.

    Fractions are intersection voxels over tumor voxels; an empty result
    means the location is indeterminate.
    """
    total = inst_mask.count()
    if total == 0:
        return []
    hits = []
    for order, (name, seg) in enumerate(segmap.segments):
        require_coregistered(inst_mask, seg)
        inter = int((inst_mask.bits & seg.bits).sum())
        if inter:
            hits.append((-inter / total, order, name))
    hits.sort()
    return [(name, -frac) for frac, _, name in hits]
