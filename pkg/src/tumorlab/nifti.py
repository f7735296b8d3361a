"""Minimal NIfTI-1 single-file reader/writer.

Supports ``.nii`` and ``.nii.gz``, datatypes uint8 / int16 / float32
(float64 additionally on write/read for processed volumes), and applies
``scl_slope``/``scl_inter`` on load. The orientation block (sform rows)
is carried through verbatim but never interpreted; all processing in this
package happens in voxel space.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import NiftiFormatError, UnsupportedDatatypeError
from .volume import LabelVolume, ScalarVolume, SoftMask

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"

_DTYPE_CODES = {
    2: np.uint8,
    4: np.int16,
    16: np.float32,
    64: np.float64,
}
_CODE_FOR_DTYPE = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}


def _read_bytes(path):
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _write_bytes(path, blob):
    path = Path(path)
    if path.suffix == ".gz":
        # fileobj + pinned mtime keep the gzip header free of filename and
        # timestamp, so identical volumes produce identical files
        with open(path, "wb") as raw:
            with gzip.GzipFile(filename="", fileobj=raw, mode="wb",
                               compresslevel=6, mtime=0) as fh:
                fh.write(blob)
    else:
        path.write_bytes(blob)


def load_nifti(path):
    """Load a NIfTI-1 volume.

    Returns a LabelVolume when the stored datatype is uint8 with values in
    {0, 1, 2}; a ScalarVolume otherwise.
    """
    blob = _read_bytes(path)
    if len(blob) < HEADER_SIZE:
        raise NiftiFormatError(f"{path}: truncated header ({len(blob)} bytes)")

    magic = blob[344:348]
    if magic != MAGIC:
        raise NiftiFormatError(f"{path}: bad magic bytes {magic!r} (expected {MAGIC!r})")

    end = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", blob, 0)
    if sizeof_hdr != HEADER_SIZE:
        (sizeof_hdr,) = struct.unpack_from(">i", blob, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise NiftiFormatError(f"{path}: sizeof_hdr is not {HEADER_SIZE}")
        end = ">"

    dim = struct.unpack_from(end + "8h", blob, 40)
    if not (1 <= dim[0] <= 7):
        raise NiftiFormatError(f"{path}: invalid dim[0]={dim[0]}")
    if dim[0] > 3 and any(d > 1 for d in dim[4 : dim[0] + 1]):
        raise UnsupportedDatatypeError(f"{path}: only 3D volumes are supported")
    nx, ny, nz = (max(1, d) for d in dim[1:4])

    (datatype,) = struct.unpack_from(end + "h", blob, 70)
    if datatype not in _DTYPE_CODES:
        raise UnsupportedDatatypeError(f"{path}: unsupported NIfTI datatype code {datatype}")
    dtype = np.dtype(_DTYPE_CODES[datatype]).newbyteorder(end)

    pixdim = struct.unpack_from(end + "8f", blob, 76)
    spacing = tuple(abs(p) for p in pixdim[1:4])
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise NiftiFormatError(f"{path}: non-positive pixdim {pixdim[1:4]}")

    (vox_offset,) = struct.unpack_from(end + "f", blob, 108)
    offset = int(vox_offset) if vox_offset >= HEADER_SIZE else VOX_OFFSET
    scl_slope, scl_inter = struct.unpack_from(end + "2f", blob, 112)
    qform_code, sform_code = struct.unpack_from(end + "2h", blob, 252)
    qoffset = struct.unpack_from(end + "3f", blob, 268)

    count = nx * ny * nz
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    if raw.size != count:
        raise NiftiFormatError(f"{path}: data section shorter than dim implies")
    data = raw.reshape((nx, ny, nz), order="F")
    data = np.ascontiguousarray(data.astype(data.dtype.newbyteorder("=")))

    if scl_slope not in (0.0, 1.0) or (scl_slope == 1.0 and scl_inter != 0.0):
        data = (data.astype(np.float32) * np.float32(scl_slope)
                + np.float32(scl_inter))

    affine = None
    origin = (0.0, 0.0, 0.0)
    if sform_code > 0:
        rows = struct.unpack_from(end + "12f", blob, 280)
        affine = np.array(rows, dtype=np.float64).reshape(3, 4)
        origin = tuple(float(v) for v in affine[:, 3])
    elif qform_code > 0:
        origin = tuple(float(v) for v in qoffset)

    if data.dtype == np.uint8 and (data.size == 0 or data.max() <= 2):
        return LabelVolume(data, spacing, origin, affine)
    return ScalarVolume(data, spacing, origin, affine)


def load_scalar(path) -> ScalarVolume:
    vol = load_nifti(path)
    if isinstance(vol, LabelVolume):
        return ScalarVolume(vol.data.astype(np.float32), vol.spacing, vol.origin, vol.affine)
    return vol


def load_label(path) -> LabelVolume:
    """Load a mask file, coercing any integer-valued array with labels <= 2."""
    vol = load_nifti(path)
    if isinstance(vol, LabelVolume):
        return vol
    data = vol.data
    rounded = np.rint(data)
    if not np.array_equal(rounded, data) or rounded.min() < 0 or rounded.max() > 2:
        raise ValueError(f"{path}: not a label volume (values outside {{0,1,2}})")
    return LabelVolume(rounded.astype(np.uint8), vol.spacing, vol.origin, vol.affine)


def _storage_array(volume):
    data = volume.data
    if isinstance(volume, LabelVolume):
        return data.astype(np.uint8, copy=False)
    if np.issubdtype(data.dtype, np.floating):
        if not np.isfinite(data).all():
            raise ValueError("cannot save volume with non-finite values")
        if data.dtype == np.float64:
            return data
        return data.astype(np.float32, copy=False)
    if data.dtype == np.int16:
        return data
    return data.astype(np.float32)


def save_nifti(volume, path):
    """Write a volume as NIfTI-1. Labels are stored as uint8.

    ``load_nifti(save_nifti(v))`` reproduces data bit-exactly for supported
    datatypes; header floats (spacing, origin) are stored at float32
    precision.
    """
    data = _storage_array(volume)
    code = _CODE_FOR_DTYPE[np.dtype(data.dtype)]
    nx, ny, nz = data.shape

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<b", hdr, 38, ord("r"))  # "regular" flag, informational
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, data.dtype.itemsize * 8)
    sx, sy, sz = (float(s) for s in volume.spacing)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter

    ox, oy, oz = (float(o) for o in volume.origin)
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform_code=0, sform_code=1
    struct.pack_into("<3f", hdr, 268, ox, oy, oz)
    if volume.affine is not None:
        rows = np.asarray(volume.affine, dtype=np.float64).reshape(3, 4)
    else:
        rows = np.array(
            [[sx, 0, 0, ox], [0, sy, 0, oy], [0, 0, sz, oz]], dtype=np.float64
        )
    struct.pack_into("<12f", hdr, 280, *(float(v) for v in rows.ravel()))
    hdr[344:348] = MAGIC

    blob = bytes(hdr) + b"\x00\x00\x00\x00" + data.ravel(order="F").tobytes()
    _write_bytes(path, blob)
