"""Binary morphology on 3D voxel grids and 2D slices.

Structuring elements are solid boxes; erosion/dilation run separably
(one axis at a time), which keeps 256^3 grids fast. For even box sizes
the anchor sits at floor((s-1)/2) per axis, so outputs are
bit-reproducible regardless of library conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize as _skeletonize

from .errors import EmptyInput
from .volume import Mask


@dataclass(frozen=True)
class StructuringElement:
    """Solid box neighborhood with an explicit anchor voxel."""

    shape: tuple[int, ...]
    anchor: tuple[int, ...] | None = None

    def __post_init__(self):
        if any(s < 1 for s in self.shape):
            raise ValueError(f"box sides must be positive, got {self.shape}")
        anchor = self.anchor
        if anchor is None:
            anchor = tuple((s - 1) // 2 for s in self.shape)
            object.__setattr__(self, "anchor", anchor)
        if len(anchor) != len(self.shape) or any(
            not (0 <= a < s) for a, s in zip(anchor, self.shape)
        ):
            raise ValueError(f"anchor {anchor} outside box {self.shape}")


def box(size: int, ndim: int = 3) -> StructuringElement:
    return StructuringElement((size,) * ndim)


def _shift_and(acc: np.ndarray, src: np.ndarray, axis: int, off: int) -> None:
    # acc[i] &= src[i + off] along axis, False outside the grid
    n = src.shape[axis]
    if off == 0:
        acc &= src
        return
    dst_sl = [slice(None)] * src.ndim
    src_sl = [slice(None)] * src.ndim
    if off > 0:
        dst_sl[axis] = slice(0, n - off)
        src_sl[axis] = slice(off, n)
    else:
        dst_sl[axis] = slice(-off, n)
        src_sl[axis] = slice(0, n + off)
    out_sl = [slice(None)] * src.ndim
    out_sl[axis] = slice(n - off, n) if off > 0 else slice(0, -off)
    acc[tuple(out_sl)] = False
    acc[tuple(dst_sl)] &= src[tuple(src_sl)]


def _shift_or(acc: np.ndarray, src: np.ndarray, axis: int, off: int) -> None:
    n = src.shape[axis]
    if off == 0:
        acc |= src
        return
    dst_sl = [slice(None)] * src.ndim
    src_sl = [slice(None)] * src.ndim
    if off > 0:
        dst_sl[axis] = slice(0, n - off)
        src_sl[axis] = slice(off, n)
    else:
        dst_sl[axis] = slice(-off, n)
        src_sl[axis] = slice(0, n + off)
    acc[tuple(dst_sl)] |= src[tuple(src_sl)]


def erode_bits(bits: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Voxel survives iff the box anchored at it lies entirely inside the input."""
    out = bits.copy()
    for axis, (s, a) in enumerate(zip(se.shape, se.anchor)):
        if s == 1:
            continue
        acc = out.copy()
        for off in range(-a, s - a):
            if off:
                _shift_and(acc, out, axis, off)
        out = acc
    return out


def dilate_bits(bits: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Union of box translates over input voxels, clipped to the grid."""
    out = bits.copy()
    for axis, (s, a) in enumerate(zip(se.shape, se.anchor)):
        if s == 1:
            continue
        acc = out.copy()
        for off in range(-a, s - a):
            if off:
                _shift_or(acc, out, axis, -off)
        out = acc
    return out


def erode(m: Mask, se: StructuringElement) -> Mask:
    return m.with_bits(erode_bits(m.bits, se))


def dilate(m: Mask, se: StructuringElement) -> Mask:
    return m.with_bits(dilate_bits(m.bits, se))


_STRUCTURES_3D = {6: ndimage.generate_binary_structure(3, 1),
                  18: ndimage.generate_binary_structure(3, 2),
                  26: ndimage.generate_binary_structure(3, 3)}
_STRUCTURES_2D = {4: ndimage.generate_binary_structure(2, 1),
                  8: ndimage.generate_binary_structure(2, 2)}


@dataclass
class LabeledComponents:
    """Deterministic component labeling: labels 1..count, 0 background.

    Components are numbered in lexicographic order of their minimum
    (z, y, x) voxel. ``sizes[k]`` is the voxel count of label k
    (``sizes[0] == 0``).
    """

    labels: np.ndarray
    count: int
    sizes: np.ndarray

    def component(self, k: int) -> np.ndarray:
        return self.labels == k

    def largest(self) -> int:
        """Label of the largest component; size ties go to the lower label."""
        if self.count == 0:
            return 0
        return int(np.argmax(self.sizes[1:])) + 1


def connected_components(bits: np.ndarray, connectivity: int | None = None) -> LabeledComponents:
    """Label connected components of a 2D or 3D boolean array."""
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim == 3:
        structure = _STRUCTURES_3D[connectivity or 26]
    elif bits.ndim == 2:
        structure = _STRUCTURES_2D[connectivity or 8]
    else:
        raise ValueError(f"expected 2D or 3D array, got {bits.ndim}D")
    raw, count = ndimage.label(bits, structure=structure)
    if count == 0:
        return LabeledComponents(raw, 0, np.zeros(1, dtype=np.int64))

    # first occurrence in (z, y, x) raster order fixes the numbering
    flat = raw.transpose(tuple(reversed(range(bits.ndim)))).ravel()
    present, first = np.unique(flat, return_index=True)
    order = present[np.argsort(first)]
    order = order[order != 0]
    lut = np.zeros(count + 1, dtype=raw.dtype)
    lut[order] = np.arange(1, count + 1)
    labels = lut[raw]
    sizes = np.bincount(labels.ravel(), minlength=count + 1).astype(np.int64)
    sizes[0] = 0
    return LabeledComponents(labels, count, sizes)


def largest_component_bits(bits: np.ndarray, connectivity: int | None = None) -> np.ndarray:
    cc = connected_components(bits, connectivity)
    if cc.count == 0:
        return np.zeros_like(bits, dtype=bool)
    return cc.component(cc.largest())


def slice_border(m2d: np.ndarray) -> np.ndarray:
    """In-plane border: the slice minus its 3x3 erosion."""
    m2d = np.asarray(m2d, dtype=bool)
    return m2d & ~erode_bits(m2d, box(3, ndim=2))


def skeletonize(m: Mask) -> Mask:
    """Topology-preserving 3D thinning down to a ~1-voxel curve."""
    if m.is_empty():
        raise EmptyInput("cannot skeletonize an empty mask")
    skel = _skeletonize(m.bits).astype(bool)
    if not skel.any():
        # thinning of very small blobs can vanish; keep one voxel
        idx = np.transpose(np.nonzero(m.bits))
        keep = tuple(idx[len(idx) // 2])
        skel = np.zeros_like(m.bits)
        skel[keep] = True
    return m.with_bits(skel & m.bits)
