"""Minimal NIfTI-1 reader and writer.

Single-file ``.nii`` / ``.nii.gz`` plus ``.hdr``/``.img`` pairs,
little-endian, 348-byte headers only. No extensions, no NIfTI-2.
Data arrays are stored x-fastest (Fortran order) per the standard and
returned with shape ``(nx, ny, nz)``.
"""

from __future__ import annotations

import gzip
import os
import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, IoError, ParseError, UnsupportedFormat
from .volume import Mask, Spacing, Volume

HEADER_SIZE = 348
MAGIC_SINGLE = b"n+1\x00"
MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype code -> numpy dtype (little-endian)
_DTYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
    256: np.dtype("<i1"),
    512: np.dtype("<u2"),
    768: np.dtype("<u4"),
}
_DTYPE_CODES = {v.newbyteorder("="): k for k, v in _DTYPES.items()}
_INT_CODES = {2, 4, 8, 256, 512, 768}

_OFF_DIM = 40
_OFF_DATATYPE = 70
_OFF_PIXDIM = 76
_OFF_VOX_OFFSET = 108
_OFF_SCL = 112
_OFF_DESCRIP = 148
_OFF_SFORM = 254
_OFF_SROW = 280
_OFF_MAGIC = 344


def _read_bytes(path: Path) -> bytes:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except OSError as e:
            raise ParseError(f"bad gzip stream in {path}: {e}", offset=0) from e
    return raw


def _parse_header(raw: bytes, path: Path):
    if len(raw) < HEADER_SIZE:
        raise ParseError(f"truncated NIfTI header in {path}: {len(raw)} bytes", offset=len(raw))
    sizeof_hdr = struct.unpack_from("<i", raw, 0)[0]
    if sizeof_hdr != HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
            raise UnsupportedFormat(f"{path}: big-endian NIfTI is not supported")
        raise ParseError(f"{path}: sizeof_hdr={sizeof_hdr}, expected 348", offset=0)
    magic = raw[_OFF_MAGIC : _OFF_MAGIC + 4]
    if magic not in (MAGIC_SINGLE, MAGIC_PAIR):
        raise ParseError(f"{path}: bad magic {magic!r}", offset=_OFF_MAGIC)

    dim = struct.unpack_from("<8h", raw, _OFF_DIM)
    if dim[0] != 3:
        raise DimensionError(f"{path}: dim[0]={dim[0]}, only 3D volumes are supported")
    dims = dim[1:4]
    if any(d < 1 for d in dims):
        raise ParseError(f"{path}: non-positive dim {dims}", offset=_OFF_DIM)

    datatype = struct.unpack_from("<h", raw, _OFF_DATATYPE)[0]
    if datatype not in _DTYPES:
        raise UnsupportedFormat(f"{path}: datatype code {datatype} is not supported")

    pixdim = struct.unpack_from("<8f", raw, _OFF_PIXDIM)
    for axis in (1, 2, 3):
        if not (np.isfinite(pixdim[axis]) and pixdim[axis] > 0):
            raise ParseError(
                f"{path}: pixdim[{axis}]={pixdim[axis]}", offset=_OFF_PIXDIM + 4 * axis
            )
    spacing = Spacing(float(pixdim[1]), float(pixdim[2]), float(pixdim[3]))

    vox_offset = struct.unpack_from("<f", raw, _OFF_VOX_OFFSET)[0]
    scl_slope, scl_inter = struct.unpack_from("<2f", raw, _OFF_SCL)
    descrip = raw[_OFF_DESCRIP : _OFF_DESCRIP + 80].split(b"\x00", 1)[0].decode(
        "ascii", errors="replace"
    )
    affine = _decode_affine(raw, spacing)
    return {
        "dims": dims,
        "dtype": _DTYPES[datatype],
        "datatype": datatype,
        "spacing": spacing,
        "vox_offset": int(vox_offset),
        "scl": (scl_slope, scl_inter),
        "descrip": descrip,
        "affine": affine,
        "single_file": magic == MAGIC_SINGLE,
    }


def _decode_affine(raw: bytes, spacing: Spacing) -> np.ndarray:
    sform_code = struct.unpack_from("<h", raw, _OFF_SFORM)[0]
    affine = np.eye(4)
    if sform_code > 0:
        rows = struct.unpack_from("<12f", raw, _OFF_SROW)
        affine[:3, :] = np.array(rows, dtype=np.float64).reshape(3, 4)
        if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
            affine = np.eye(4)
            affine[0, 0], affine[1, 1], affine[2, 2] = spacing.dx, spacing.dy, spacing.dz
    else:
        # qform decoding is skipped: pixdim-scaled identity is enough metadata
        affine[0, 0], affine[1, 1], affine[2, 2] = spacing.dx, spacing.dy, spacing.dz
    return affine


def _read_data(hdr: dict, raw: bytes, path: Path) -> np.ndarray:
    dims = hdr["dims"]
    count = int(np.prod(dims))
    if hdr["single_file"]:
        offset = max(hdr["vox_offset"], HEADER_SIZE)
        blob = raw[offset:]
    else:
        img = _companion_img(path)
        blob = _read_bytes(img)[max(hdr["vox_offset"], 0) :]
    nbytes = count * hdr["dtype"].itemsize
    if len(blob) < nbytes:
        raise ParseError(
            f"{path}: data truncated, need {nbytes} bytes, have {len(blob)}",
            offset=len(raw),
        )
    arr = np.frombuffer(blob[:nbytes], dtype=hdr["dtype"])
    return arr.reshape(dims, order="F")


def _companion_img(path: Path) -> Path:
    stem = path.name
    for suffix in (".hdr.gz", ".hdr"):
        if stem.endswith(suffix):
            base = stem[: -len(suffix)]
            for img in (base + ".img", base + ".img.gz"):
                candidate = path.with_name(img)
                if candidate.exists():
                    return candidate
            raise IoError(f"no .img companion for {path}")
    raise IoError(f"cannot locate image data for {path}")


def load_nifti(path, *, as_mask: bool = False, label: str | None = None):
    """Load a NIfTI-1 file as a Volume, or as a Mask when ``as_mask``.

    HU data is scaled by scl_slope/scl_inter when set. Mask files must
    hold integer-coded data; any nonzero voxel becomes True.
    """
    path = Path(path)
    if not path.exists():
        raise IoError(f"no such file: {path}")
    raw = _read_bytes(path)
    hdr = _parse_header(raw, path)
    data = _read_data(hdr, raw, path)

    if as_mask:
        if hdr["datatype"] not in _INT_CODES:
            raise UnsupportedFormat(
                f"{path}: masks require integer-coded data, got datatype {hdr['datatype']}"
            )
        name = label or hdr["descrip"] or path.name.split(".")[0]
        return Mask(data != 0, hdr["spacing"], name, hdr["affine"])

    slope, inter = hdr["scl"]
    if np.isfinite(slope) and slope != 0 and (slope, inter) != (1.0, 0.0):
        data = data.astype(np.float64) * slope + inter
    else:
        data = np.ascontiguousarray(data).astype(data.dtype.newbyteorder("="))
    return Volume(data, hdr["spacing"], hdr["affine"])


def load_volume(path) -> Volume:
    return load_nifti(path)


def load_mask(path, label: str | None = None) -> Mask:
    return load_nifti(path, as_mask=True, label=label)


def save_nifti(obj, path) -> None:
    """Write a Volume or Mask as single-file NIfTI-1.

    Integer data round-trips bit-exactly; masks are written as uint8
    with the label stored in descrip. ``.gz`` paths are gzip-compressed.
    """
    path = Path(path)
    if isinstance(obj, Mask):
        data = obj.bits.astype(np.uint8)
        descrip = obj.label.encode("ascii", errors="replace")[:79]
    else:
        data = obj.data
        if data.dtype == np.float64 or data.dtype == np.float32:
            data = np.ascontiguousarray(data)
        descrip = b""
    dtype = data.dtype.newbyteorder("=")
    if dtype not in _DTYPE_CODES:
        data = data.astype(np.float64)
        dtype = data.dtype
    code = _DTYPE_CODES[dtype]

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, _OFF_DIM, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, _OFF_DATATYPE, code)
    struct.pack_into("<h", hdr, 72, dtype.itemsize * 8)  # bitpix
    sp = obj.spacing
    struct.pack_into("<8f", hdr, _OFF_PIXDIM, 1.0, sp.dx, sp.dy, sp.dz, 0, 0, 0, 0)
    struct.pack_into("<f", hdr, _OFF_VOX_OFFSET, 352.0)
    struct.pack_into("<2f", hdr, _OFF_SCL, 1.0, 0.0)
    hdr[_OFF_DESCRIP : _OFF_DESCRIP + len(descrip)] = descrip
    struct.pack_into("<h", hdr, _OFF_SFORM, 1)
    struct.pack_into("<12f", hdr, _OFF_SROW, *obj.affine[:3, :].ravel())
    hdr[_OFF_MAGIC : _OFF_MAGIC + 4] = MAGIC_SINGLE

    payload = bytes(hdr) + b"\x00" * 4 + data.astype(dtype).tobytes(order="F")
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "wb", compresslevel=6) as f:
                f.write(payload)
        else:
            path.write_bytes(payload)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def sniff_is_nifti(path) -> bool:
    """Cheap check for the NIfTI-1 magic without full parsing."""
    try:
        raw = _read_bytes(Path(path))
    except (IoError, ParseError):
        return False
    return len(raw) >= HEADER_SIZE and raw[_OFF_MAGIC : _OFF_MAGIC + 4] in (
        MAGIC_SINGLE,
        MAGIC_PAIR,
    )


def case_files(directory) -> list[Path]:
    """NIfTI files directly under ``directory``, sorted by name."""
    d = Path(directory)
    out = [p for p in sorted(d.iterdir()) if p.name.endswith((".nii", ".nii.gz"))]
    if not out:
        raise IoError(f"no NIfTI files in {os.fspath(d)}")
    return out
