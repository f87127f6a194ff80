"""Seeded synthetic CT cases with closed-form ground truth.

Shapes are voxelized by a center-inside test, so masks depend only on
geometry, never on the noise seed. HU noise uses one Philox stream per
structure, keyed by (seed, structure index), which keeps every
structure's texture stable when others are added or removed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeOutOfBounds
from .volume import Mask, Spacing, Volume

BACKGROUND_HU = -1000.0
BACKGROUND_STD = 20.0


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]  # mm
    semi_axes: tuple[float, float, float]  # mm
    rotation_z_deg: float = 0.0  # in-plane rotation

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = pts - np.asarray(self.center)
        if self.rotation_z_deg:
            a = math.radians(self.rotation_z_deg)
            c, s = math.cos(a), math.sin(a)
            x = c * rel[..., 0] + s * rel[..., 1]
            y = -s * rel[..., 0] + c * rel[..., 1]
            rel = np.stack([x, y, rel[..., 2]], axis=-1)
        q = rel / np.asarray(self.semi_axes)
        return np.einsum("...k,...k->...", q, q) < 1.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        r = max(self.semi_axes)
        c = np.asarray(self.center)
        return c - r, c + r

    def volume_mm3(self) -> float:
        a, b, c = self.semi_axes
        return 4.0 / 3.0 * math.pi * a * b * c


@dataclass(frozen=True)
class Tube:
    """Constant-radius tube around a polyline centerline."""

    points: tuple[tuple[float, float, float], ...]  # mm
    radius: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        flat = pts.reshape(-1, 3)
        d2 = np.full(len(flat), np.inf)
        for a, b in zip(self.points[:-1], self.points[1:]):
            a = np.asarray(a, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            ab = b - a
            denom = float(ab @ ab)
            t = ((flat - a) @ ab) / denom if denom > 0 else np.zeros(len(flat))
            t = np.clip(t, 0.0, 1.0)
            near = a + t[:, None] * ab
            d2 = np.minimum(d2, np.einsum("ij,ij->i", flat - near, flat - near))
        return (d2 < self.radius**2).reshape(pts.shape[:-1])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(self.points)
        return pts.min(axis=0) - self.radius, pts.max(axis=0) + self.radius

    def volume_mm3(self) -> float:
        pts = np.asarray(self.points)
        length = float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
        return math.pi * self.radius**2 * length


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]  # mm
    half_sizes: tuple[float, float, float]  # mm

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = np.abs(pts - np.asarray(self.center))
        return np.all(rel < np.asarray(self.half_sizes), axis=-1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        h = np.asarray(self.half_sizes)
        return c - h, c + h

    def volume_mm3(self) -> float:
        return 8.0 * math.prod(self.half_sizes)


@dataclass(frozen=True)
class Union:
    parts: tuple

    def contains(self, pts: np.ndarray) -> np.ndarray:
        out = self.parts[0].contains(pts)
        for p in self.parts[1:]:
            out |= p.contains(pts)
        return out

    def bounds(self):
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)

    def volume_mm3(self) -> float:
        # parts may overlap; callers needing exact volumes use disjoint parts
        return sum(p.volume_mm3() for p in self.parts)


@dataclass
class Structure:
    name: str
    shape: object
    hu_mean: float
    hu_std: float = 5.0


@dataclass
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: Spacing
    organs: list[Structure] = field(default_factory=list)
    tumors: list[Structure] = field(default_factory=list)
    vessels: list[Structure] = field(default_factory=list)
    seed: int = 0
    octant_partition: str | None = None  # organ to split into 8 sub-segment masks
    ground_truth: dict = field(default_factory=dict)


def _voxel_centers(dims, spacing: Spacing) -> np.ndarray:
    sp = spacing.as_array()
    ax = [(np.arange(n) + 0.5) * sp[i] for i, n in enumerate(dims)]
    gx, gy, gz = np.meshgrid(*ax, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def _check_bounds(struct: Structure, dims, spacing: Spacing) -> None:
    lo, hi = struct.shape.bounds()
    ext = np.array(dims) * spacing.as_array()
    if (lo < 0).any() or (hi > ext).any():
        raise ShapeOutOfBounds(
            f"{struct.name}: bounds {lo.tolist()}..{hi.tolist()} exceed grid {ext.tolist()}"
        )


def _structure_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 32) + index))


def generate(spec: PhantomSpec) -> tuple[Volume, dict[str, Mask], dict]:
    """Voxelize a phantom: HU volume, one mask per structure, ground truth."""
    centers = _voxel_centers(spec.dims, spec.spacing)
    data = np.empty(spec.dims, dtype=np.float64)
    rng_bg = _structure_rng(spec.seed, 0)
    data[:] = rng_bg.normal(BACKGROUND_HU, BACKGROUND_STD, size=spec.dims)

    masks: dict[str, Mask] = {}
    # paint order: organs, then vessels, then tumors (tumors live inside organs)
    ordered = list(spec.organs) + list(spec.vessels) + list(spec.tumors)
    for index, struct in enumerate(ordered, start=1):
        _check_bounds(struct, spec.dims, spec.spacing)
        bits = struct.shape.contains(centers)
        rng = _structure_rng(spec.seed, index)
        noise = rng.normal(struct.hu_mean, struct.hu_std, size=int(bits.sum()))
        data[bits] = noise
        if struct.name in masks:
            bits = bits | masks[struct.name].bits
        masks[struct.name] = Mask(bits, spec.spacing, struct.name)

    if spec.octant_partition:
        masks.update(_octant_segments(masks[spec.octant_partition]))

    truth = dict(spec.ground_truth)
    truth.setdefault("organ_volumes_cm3", {})
    for struct in spec.organs:
        truth["organ_volumes_cm3"].setdefault(
            struct.name, round(struct.shape.volume_mm3() / 1000.0, 3)
        )
    truth.setdefault("organ_hu", {s.name: s.hu_mean for s in spec.organs})
    return Volume(data, spec.spacing), masks, truth


def _octant_segments(organ: Mask) -> dict[str, Mask]:
    """Split an organ into 8 sub-segment masks by its bounding-box center."""
    idx = np.argwhere(organ.bits)
    mid = (idx.min(axis=0) + idx.max(axis=0) + 1) // 2
    segments = {}
    grids = np.indices(organ.dims)
    for k in range(8):
        side = [(k >> b) & 1 for b in range(3)]
        sel = organ.bits.copy()
        for axis in range(3):
            cond = grids[axis] >= mid[axis] if side[axis] else grids[axis] < mid[axis]
            sel &= cond
        segments[f"{organ.label}_segment_{k + 1}"] = Mask(
            sel, organ.spacing, f"{organ.label}_segment_{k + 1}"
        )
    return segments


def sphere_truth(r_mm: float) -> dict:
    return {
        "D_cm": round(2 * r_mm / 10, 1),
        "d_cm": round(2 * r_mm / 10, 1),
        "volume_cm3": round(4.0 / 3.0 * math.pi * r_mm**3 / 1000.0, 3),
    }


def ellipsoid_truth(semi_axes) -> dict:
    a, b, c = semi_axes
    return {
        "D_cm": round(2 * max(a, b) / 10, 1),
        "d_cm": round(2 * min(a, b) / 10, 1),
        "volume_cm3": round(4.0 / 3.0 * math.pi * a * b * c / 1000.0, 3),
    }


_JSON_TYPES = (Ellipsoid, Tube, Box, Union, Structure, PhantomSpec, Spacing)


def spec_to_json(spec: PhantomSpec) -> str:
    def encode(obj):
        if isinstance(obj, _JSON_TYPES):
            d = {"__type__": type(obj).__name__}
            d.update(vars(obj))
            return d
        raise TypeError(f"cannot encode {type(obj)}")

    return json.dumps(spec, default=encode, indent=2, sort_keys=True)


def spec_from_json(text: str) -> PhantomSpec:
    kinds = {c.__name__: c for c in _JSON_TYPES}

    def decode(d):
        kind = d.pop("__type__", None)
        if kind is None:
            return d
        cls = kinds[kind]
        if cls is Union:
            d["parts"] = tuple(d["parts"])
        if cls in (Ellipsoid, Tube, Box):
            for key in ("center", "semi_axes", "points", "half_sizes"):
                if key in d:
                    v = d[key]
                    d[key] = tuple(tuple(p) if isinstance(p, list) else p for p in v)
        if cls is PhantomSpec:
            d["dims"] = tuple(d["dims"])
        return cls(**d)

    return json.loads(text, object_hook=decode)


def rotate_shape(shape, pivot, angle_deg: float):
    """Rotate a primitive in-plane (about z) around a scene pivot."""
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    px, py, _ = pivot

    def rot(p):
        x, y, z = p
        return (px + c * (x - px) - s * (y - py), py + s * (x - px) + c * (y - py), z)

    if isinstance(shape, Ellipsoid):
        return Ellipsoid(rot(shape.center), shape.semi_axes, shape.rotation_z_deg + angle_deg)
    if isinstance(shape, Tube):
        return Tube(tuple(rot(p) for p in shape.points), shape.radius)
    if isinstance(shape, Union):
        return Union(tuple(rotate_shape(p, pivot, angle_deg) for p in shape.parts))
    raise TypeError(f"cannot rotate {type(shape)}")


# ---------------------------------------------------------------------------
# scenario library: one standard anatomy plus per-scenario variations
# ---------------------------------------------------------------------------

GRID = (160, 160, 120)
ISO = Spacing(1.0, 1.0, 1.0)

LIVER_HU, PANCREAS_HU, SPLEEN_HU, KIDNEY_HU, VESSEL_HU = 105.0, 82.0, 100.0, 95.0, 190.0
LIVER_TUMOR_HU, PDAC_HU, PDAC_STD, KIDNEY_TUMOR_HU = 62.0, 39.17, 29.65, 140.0

# standard pancreas: body/tail bar along x plus a bulky head at high x;
# the SMA runs in z behind the neck, so the head/body plane sits at x=89
# and the body/tail plane at the midpoint of the remaining extent, x=64
PANC_BODY = Ellipsoid((64.0, 110.0, 60.0), (25.0, 9.0, 8.0))
PANC_HEAD = Ellipsoid((105.0, 110.0, 60.0), (16.0, 16.0, 14.0))
SMA_TUBE = Tube(((89.0, 132.0, 15.0), (89.0, 132.0, 112.0)), 4.0)
PANC_PLANES = {"head_body_x_mm": 89.0, "body_tail_x_mm": 64.0, "head_side": "high_x"}


def _base_organs(liver_hu: float = LIVER_HU, pancreas_hu: float = PANCREAS_HU):
    return [
        Structure("liver", Ellipsoid((48.0, 50.0, 46.0), (30.0, 24.0, 26.0)), liver_hu, 6.0),
        Structure("pancreas", Union((PANC_BODY, PANC_HEAD)), pancreas_hu, 7.0),
        Structure("spleen", Ellipsoid((125.0, 50.0, 46.0), (16.0, 14.0, 18.0)), SPLEEN_HU, 6.0),
        Structure(
            "kidneys",
            Union(
                (
                    Ellipsoid((40.0, 110.0, 95.0), (14.0, 11.0, 16.0)),
                    Ellipsoid((110.0, 110.0, 95.0), (14.0, 11.0, 16.0)),
                )
            ),
            KIDNEY_HU,
            6.0,
        ),
    ]


def _labels(liver="no", kidney="no", pancreas="no") -> dict:
    return {"liver": liver, "kidney": kidney, "pancreas": pancreas}


def _standard(seed: int, tumors=(), truth=None, liver_hu=LIVER_HU) -> PhantomSpec:
    gt = {"labels": _labels(), "tumors": [], "pancreas_planes": dict(PANC_PLANES)}
    if truth:
        gt.update(truth)
    return PhantomSpec(
        dims=GRID,
        spacing=ISO,
        organs=_base_organs(liver_hu=liver_hu),
        vessels=[Structure("SMA", SMA_TUBE, VESSEL_HU, 8.0)],
        tumors=list(tumors),
        seed=seed,
        octant_partition="liver",
        ground_truth=gt,
    )


def _tumor_entry(organ, shape, mask_name, subsegments=()) -> dict:
    if isinstance(shape, Ellipsoid):
        a, b, c = shape.semi_axes
        entry = ellipsoid_truth((a, b, c))
    else:
        raise TypeError("ground truth only defined for ellipsoid tumors")
    entry.update(
        {"organ": organ, "mask": mask_name, "center": list(shape.center),
         "subsegments": list(subsegments)}
    )
    return entry


def _sphere(center, r) -> Ellipsoid:
    return Ellipsoid(tuple(center), (r, r, r))


def _with_tumor(seed, organ, mask_name, shape, hu, std, subsegments=(), extra_truth=None):
    label_key = {"liver": "liver", "pancreas": "pancreas", "kidneys": "kidney"}[organ]
    truth = {
        "labels": _labels(**{label_key: "yes"}),
        "tumors": [_tumor_entry(organ, shape, mask_name, subsegments)],
    }
    if extra_truth:
        truth.update(extra_truth)
    return _standard(seed, tumors=[Structure(mask_name, shape, hu, std)], truth=truth)


def _staging_spec(seed, pdac_shape, expected_stage, extra_vessels=()) -> PhantomSpec:
    spec = _with_tumor(
        seed, "pancreas", "pancreatic_tumor", pdac_shape, PDAC_HU, PDAC_STD,
        extra_truth={"expected_stage": expected_stage},
    )
    spec.vessels.extend(extra_vessels)
    return spec


def _liver24_spec(seed: int) -> PhantomSpec:
    liver = Ellipsoid((110.0, 120.0, 128.0), (85.0, 75.0, 90.0))
    lesions = []
    truth_tumors = []
    k = 0
    for dx in (-45.0, -15.0, 15.0, 45.0):
        for dy in (-35.0, 0.0, 35.0):
            for dz in (-40.0, 40.0):
                r = float(4 + k % 9)
                shape = _sphere((110.0 + dx, 120.0 + dy, 128.0 + dz), r)
                lesions.append(shape)
                truth_tumors.append(_tumor_entry("liver", shape, "liver_tumor"))
                k += 1
    return PhantomSpec(
        dims=(256, 256, 256),
        spacing=ISO,
        organs=[
            Structure("liver", liver, LIVER_HU, 6.0),
            Structure("pancreas", Ellipsoid((228.0, 40.0, 60.0), (20.0, 8.0, 7.0)), PANCREAS_HU, 7.0),
            Structure("spleen", Ellipsoid((228.0, 40.0, 180.0), (14.0, 12.0, 15.0)), SPLEEN_HU, 6.0),
            Structure(
                "kidneys",
                Union(
                    (
                        Ellipsoid((30.0, 30.0, 60.0), (12.0, 9.0, 14.0)),
                        Ellipsoid((30.0, 30.0, 180.0), (12.0, 9.0, 14.0)),
                    )
                ),
                KIDNEY_HU,
                6.0,
            ),
        ],
        tumors=[Structure("liver_tumor", Union(tuple(lesions)), LIVER_TUMOR_HU, 8.0)],
        seed=seed,
        octant_partition="liver",
        ground_truth={
            "labels": _labels(liver="yes"),
            "tumors": sorted(truth_tumors, key=lambda t: -t["D_cm"]),
        },
    )


def _noisy_spec(seed: int) -> PhantomSpec:
    # r=0.6 about a voxel center hits exactly 1 voxel; r=1.2 about a
    # grid corner hits exactly the surrounding 2x2x2 block
    singles = [_sphere((30.5 + 12 * i, 30.5, 30.5), 0.6) for i in range(8)]
    clusters = [_sphere((30.0 + 14 * i, 60.0, 30.0), 1.2) for i in range(4)]
    cubes = [Box((40.0, 96.0, 60.0), (5.0, 5.0, 5.0)), Box((90.0, 96.0, 60.0), (5.0, 5.0, 5.0))]
    spec = _standard(seed)
    spec.tumors = [Structure("liver_tumor", Union(tuple(singles + clusters + cubes)), 60.0, 5.0)]
    spec.ground_truth.update(
        {
            "labels": _labels(liver="yes"),
            "noise": {
                "single_voxels": 8,
                "clusters_2x2x2": 4,
                "surviving_volume_mm3": 2000.0,  # the two 10^3 cubes
            },
        }
    )
    return spec


def _rotated_pancreas_spec(seed: int, angle_deg: float) -> PhantomSpec:
    pivot = (80.0, 80.0, 60.0)
    spec = _standard(seed)
    for group in (spec.organs, spec.vessels):
        for struct in group:
            if struct.name in ("pancreas", "SMA"):
                struct.shape = rotate_shape(struct.shape, pivot, angle_deg)
    spec.ground_truth["rotation_deg"] = angle_deg
    return spec


def scenario_library() -> dict[str, PhantomSpec]:
    """Fixed, seeded scenarios covering every pipeline behavior."""
    lib = {
        "control": _standard(11),
        "fatty_liver": _standard(12, liver_hu=32.0),
        "liver_small": _with_tumor(
            21, "liver", "liver_tumor", _sphere((36, 40, 38), 8.0), LIVER_TUMOR_HU, 8.0,
            subsegments=["liver_segment_1"],
        ),
        "liver_large": _with_tumor(
            22, "liver", "liver_tumor", _sphere((48, 50, 46), 20.0), LIVER_TUMOR_HU, 8.0,
        ),
        "kidney_small": _with_tumor(
            23, "kidneys", "kidney_tumor", _sphere((110, 110, 95), 9.0), KIDNEY_TUMOR_HU, 8.0,
        ),
        "kidney_large": _with_tumor(
            24, "kidneys", "kidney_tumor",
            Ellipsoid((40.0, 110.0, 95.0), (11.0, 9.0, 14.0)), KIDNEY_TUMOR_HU, 8.0,
        ),
        "pancreas_head_tumor": _with_tumor(
            25, "pancreas", "pancreatic_tumor", _sphere((105, 110, 60), 7.0), PDAC_HU, PDAC_STD,
            subsegments=["head"],
        ),
        "pancreas_body_tumor": _with_tumor(
            26, "pancreas", "pancreatic_tumor", _sphere((72, 110, 60), 6.0), PDAC_HU, PDAC_STD,
            subsegments=["body"],
        ),
        "pancreas_tail_tumor": _with_tumor(
            27, "pancreas", "pancreatic_tumor", _sphere((48, 110, 60), 6.0), PDAC_HU, PDAC_STD,
            subsegments=["tail"],
        ),
        "pancreas_rotated45": _rotated_pancreas_spec(28, 45.0),
        "t1a": _staging_spec(31, _sphere((72, 110, 60), 2.0), "T1a"),
        "t1b": _staging_spec(32, _sphere((72, 110, 60), 4.0), "T1b"),
        "t1c": _staging_spec(33, _sphere((72, 110, 60), 7.0), "T1c"),
        "t4_encasement": _staging_spec(
            36,
            Ellipsoid((89.0, 118.0, 55.0), (14.0, 14.0, 10.0)),
            "T4",
            extra_vessels=[
                Structure("SA", Tube(((20.0, 140.0, 100.0), (140.0, 140.0, 100.0)), 3.0), VESSEL_HU, 8.0)
            ],
        ),
        "liver_24": _liver24_spec(41),
        "noisy_segmentation": _noisy_spec(42),
    }

    # T2/T3 need a pancreas wide enough for >2 cm tumors
    for name, shape, stage, seed in (
        ("t2", _sphere((68, 100, 58), 15.0), "T2", 34),
        ("t3", Ellipsoid((66.0, 100.0, 58.0), (22.0, 14.0, 12.0)), "T3", 35),
    ):
        spec = PhantomSpec(
            dims=GRID,
            spacing=ISO,
            organs=[
                Structure("liver", Ellipsoid((48.0, 50.0, 46.0), (30.0, 24.0, 26.0)), LIVER_HU, 6.0),
                Structure(
                    "pancreas",
                    Union(
                        (
                            Ellipsoid((76.0, 100.0, 58.0), (34.0, 24.0, 16.0)),
                            Ellipsoid((125.0, 100.0, 58.0), (15.0, 16.0, 14.0)),
                        )
                    ),
                    PANCREAS_HU,
                    7.0,
                ),
                Structure("spleen", Ellipsoid((125.0, 50.0, 46.0), (16.0, 14.0, 18.0)), SPLEEN_HU, 6.0),
                Structure(
                    "kidneys",
                    Union(
                        (
                            Ellipsoid((40.0, 143.0, 95.0), (14.0, 11.0, 16.0)),
                            Ellipsoid((110.0, 143.0, 95.0), (14.0, 11.0, 16.0)),
                        )
                    ),
                    KIDNEY_HU,
                    6.0,
                ),
            ],
            vessels=[Structure("SMA", Tube(((110.0, 125.0, 15.0), (110.0, 125.0, 112.0)), 4.0), VESSEL_HU, 8.0)],
            tumors=[Structure("pancreatic_tumor", shape, PDAC_HU, PDAC_STD)],
            seed=seed,
            octant_partition="liver",
            ground_truth={
                "labels": _labels(pancreas="yes"),
                "tumors": [_tumor_entry("pancreas", shape, "pancreatic_tumor")],
                "expected_stage": stage,
            },
        )
        lib[name] = spec
    return lib
