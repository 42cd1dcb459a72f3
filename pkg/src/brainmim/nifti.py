"""Minimal NIfTI-1 single-file reader/writer (``.nii`` and ``.nii.gz``).

Only the pieces of the format the preprocessing needs are interpreted: dims,
datatype, pixdim, intensity scaling and the qform/sform geometry. Extensions
are skipped on read and never written.
"""
from __future__ import annotations

import gzip
import io
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from brainmim.volume import Volume, orientation_from_affine

HEADER_SIZE = 348
DEFAULT_VOX_OFFSET = 352

# NIfTI-1 header layout; numpy packs the fields without padding, giving 348 bytes
_HEADER_FIELDS = [
    ("sizeof_hdr", "i4"), ("data_type", "S10"), ("db_name", "S18"), ("extents", "i4"),
    ("session_error", "i2"), ("regular", "S1"), ("dim_info", "u1"), ("dim", "i2", (8,)),
    ("intent_p1", "f4"), ("intent_p2", "f4"), ("intent_p3", "f4"), ("intent_code", "i2"),
    ("datatype", "i2"), ("bitpix", "i2"), ("slice_start", "i2"), ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"), ("scl_slope", "f4"), ("scl_inter", "f4"), ("slice_end", "i2"),
    ("slice_code", "u1"), ("xyzt_units", "u1"), ("cal_max", "f4"), ("cal_min", "f4"),
    ("slice_duration", "f4"), ("toffset", "f4"), ("glmax", "i4"), ("glmin", "i4"),
    ("descrip", "S80"), ("aux_file", "S24"), ("qform_code", "i2"), ("sform_code", "i2"),
    ("quatern_b", "f4"), ("quatern_c", "f4"), ("quatern_d", "f4"),
    ("qoffset_x", "f4"), ("qoffset_y", "f4"), ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)), ("srow_y", "f4", (4,)), ("srow_z", "f4", (4,)),
    ("intent_name", "S16"), ("magic", "S4"),
]


def _header_dtype(endian):
    fields = []
    for f in _HEADER_FIELDS:
        kind = f[1]
        if kind[0] in "iuf" and kind != "u1":
            kind = endian + kind
        fields.append((f[0], kind) + f[2:])
    return np.dtype(fields)


HEADER_DTYPE_LE = _header_dtype("<")
HEADER_DTYPE_BE = _header_dtype(">")
assert HEADER_DTYPE_LE.itemsize == HEADER_SIZE

# datatype code -> numpy dtype (byte order added at read time)
DATATYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}
DATATYPE_NAMES = {2: "uint8", 4: "int16", 8: "int32", 16: "float32", 64: "float64"}


class NiftiError(ValueError):
    """Malformed, truncated or unsupported NIfTI file."""


@dataclass
class NiftiHeader:
    dims: tuple[int, ...]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]
    scl_slope: float
    scl_inter: float
    qform_code: int
    sform_code: int
    quatern: tuple[float, float, float]
    qoffset: tuple[float, float, float]
    srow: np.ndarray
    vox_offset: int
    magic: bytes
    endian: str

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NiftiHeader":
        if len(raw) < HEADER_SIZE:
            raise NiftiError(f"truncated header: {len(raw)} of {HEADER_SIZE} bytes")
        raw = raw[:HEADER_SIZE]
        # byte order: dim[0] must be a rank in 1..7
        endian = "<"
        dim0 = int(np.frombuffer(raw, dtype="<i2", count=1, offset=40)[0])
        if not 1 <= dim0 <= 7:
            endian = ">"
            dim0 = int(np.frombuffer(raw, dtype=">i2", count=1, offset=40)[0])
            if not 1 <= dim0 <= 7:
                raise NiftiError("cannot determine byte order: dim[0] out of range in both orders")
        h = np.frombuffer(raw, dtype=HEADER_DTYPE_LE if endian == "<" else HEADER_DTYPE_BE)[0]
        sizeof_hdr = int(h["sizeof_hdr"])
        if sizeof_hdr == 540:
            raise NiftiError("NIfTI-2 files are not supported")
        if sizeof_hdr != HEADER_SIZE:
            raise NiftiError(f"sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}")
        magic = bytes(h["magic"])
        if magic.rstrip(b"\0") == b"ni1":
            raise NiftiError("two-file NIfTI (.hdr/.img) is not supported")
        if magic.rstrip(b"\0") != b"n+1":
            raise NiftiError(f"bad magic {magic!r}")
        vox_offset = int(h["vox_offset"])
        if vox_offset < DEFAULT_VOX_OFFSET:
            raise NiftiError(f"vox_offset {vox_offset} < {DEFAULT_VOX_OFFSET}")
        rank = int(h["dim"][0])
        return cls(
            dims=tuple(int(d) for d in h["dim"][1:rank + 1]),
            datatype=int(h["datatype"]),
            bitpix=int(h["bitpix"]),
            pixdim=tuple(float(p) for p in h["pixdim"]),
            scl_slope=float(h["scl_slope"]),
            scl_inter=float(h["scl_inter"]),
            qform_code=int(h["qform_code"]),
            sform_code=int(h["sform_code"]),
            quatern=(float(h["quatern_b"]), float(h["quatern_c"]), float(h["quatern_d"])),
            qoffset=(float(h["qoffset_x"]), float(h["qoffset_y"]), float(h["qoffset_z"])),
            srow=np.stack([h["srow_x"], h["srow_y"], h["srow_z"]]).astype(np.float64),
            vox_offset=vox_offset,
            magic=magic,
            endian=endian,
        )

    def spatial_shape(self) -> tuple[int, int, int]:
        dims = list(self.dims)
        while len(dims) > 3 and dims[-1] == 1:
            dims.pop()
        if len(dims) != 3:
            raise NiftiError(f"expected a 3D image, got dims {tuple(self.dims)}")
        if any(d < 1 for d in dims):
            raise NiftiError(f"non-positive dimension in {tuple(dims)}")
        return tuple(dims)

    def qform_affine(self) -> np.ndarray:
        b, c, d = self.quatern
        a = math.sqrt(max(0.0, 1.0 - (b * b + c * c + d * d)))
        rot = np.array([
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ])
        qfac = -1.0 if self.pixdim[0] < 0 else 1.0
        zooms = np.abs(np.array(self.pixdim[1:4]))
        zooms[2] *= qfac
        out = np.eye(4)
        out[:3, :3] = rot * zooms
        out[:3, 3] = self.qoffset
        return out

    def affine(self) -> np.ndarray:
        if self.sform_code > 0:
            out = np.eye(4)
            out[:3] = self.srow
            return out
        if self.qform_code > 0:
            return self.qform_affine()
        return np.diag(list(np.abs(self.pixdim[1:4])) + [1.0])


def _open_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise NiftiError(f"{path}: corrupt gzip stream ({exc})") from None
    return raw


def _volume_id(path) -> str:
    name = Path(path).name
    for suffix in (".nii.gz", ".nii"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def read_header(path) -> NiftiHeader:
    return NiftiHeader.from_bytes(_open_bytes(path)[:HEADER_SIZE])


def read_nifti(path) -> Volume:
    """Decode a 3D NIfTI-1 file into a float32 :class:`Volume`.

    Intensity scaling ``slope * value + inter`` is applied when ``scl_slope``
    is nonzero. The affine comes from the sform if its code is set, else the
    qform, else the diagonal of pixdim. Data is returned in file order; no
    reorientation happens here.
    """
    return decode_nifti(_open_bytes(path), path)


def decode_nifti(raw: bytes, path="<bytes>") -> Volume:
    """Decode NIfTI-1 bytes (gzip or plain); ``path`` is used for messages and the volume id."""
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise NiftiError(f"{path}: corrupt gzip stream ({exc})") from None
    try:
        hdr = NiftiHeader.from_bytes(raw)
        shape = hdr.spatial_shape()
    except NiftiError as exc:
        raise NiftiError(f"{path}: {exc}") from None
    if hdr.datatype not in DATATYPES:
        raise NiftiError(f"{path}: unsupported datatype code {hdr.datatype}")
    dtype = np.dtype(DATATYPES[hdr.datatype]).newbyteorder(hdr.endian)
    count = int(np.prod(shape))
    nbytes = count * dtype.itemsize
    if len(raw) < hdr.vox_offset + nbytes:
        raise NiftiError(f"{path}: truncated data, need {hdr.vox_offset + nbytes} bytes, have {len(raw)}")
    values = np.frombuffer(raw, dtype=dtype, count=count, offset=hdr.vox_offset)
    # on-disk order is x fastest
    data = values.reshape(shape, order="F")
    slope = hdr.scl_slope
    if slope != 0.0 and math.isfinite(slope):
        inter = hdr.scl_inter if math.isfinite(hdr.scl_inter) else 0.0
        if slope != 1.0 or inter != 0.0:
            data = data.astype(np.float64) * slope + inter
    data = np.ascontiguousarray(data, dtype=np.float32)
    bad = int(np.count_nonzero(~np.isfinite(data)))
    if bad:
        raise NiftiError(f"{path}: {bad} non-finite voxel values")
    spacing = tuple(abs(p) for p in hdr.pixdim[1:4])
    if not all(math.isfinite(s) and s > 0 for s in spacing):
        raise NiftiError(f"{path}: invalid pixdim spacing {spacing}")
    affine = hdr.affine()
    try:
        orientation = orientation_from_affine(affine)
    except ValueError as exc:
        raise NiftiError(f"{path}: {exc}") from None
    return Volume(data, spacing=spacing, affine=affine, orientation=orientation, id=_volume_id(path))


def _affine_to_quaternion(affine):
    """Best-effort qform parameters; returns None for sheared affines."""
    m = np.asarray(affine, dtype=np.float64)[:3, :3]
    zooms = np.linalg.norm(m, axis=0)
    if np.any(zooms == 0):
        return None
    r = m / zooms
    qfac = 1.0
    if np.linalg.det(r) < 0:
        qfac = -1.0
        r[:, 2] *= -1
    if not np.allclose(r.T @ r, np.eye(3), atol=1e-4):
        return None
    # Shepperd's method for the rotation quaternion
    tr = np.trace(r)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        a, b, c, d = 0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        a, b, c, d = (r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        a, b, c, d = (r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        a, b, c, d = (r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s
    if a < 0:
        a, b, c, d = -a, -b, -c, -d
    return (b, c, d), qfac


def nifti_bytes(volume: Volume, description: str = "") -> bytes:
    """Serialize ``volume`` as an uncompressed single-file NIfTI-1 (float32, little-endian)."""
    hdr = np.zeros((), dtype=HEADER_DTYPE_LE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    hdr["dim"] = [3, *volume.shape, 1, 1, 1, 1]
    hdr["datatype"] = 16
    hdr["bitpix"] = 32
    # pixdim must agree with the qform zooms, so take it from the affine
    zooms = np.linalg.norm(volume.affine[:3, :3], axis=0)
    hdr["pixdim"] = [1.0, *zooms, 0.0, 0.0, 0.0, 0.0]
    hdr["vox_offset"] = DEFAULT_VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # millimeters
    hdr["descrip"] = description.encode("ascii", "replace")[:79]
    hdr["sform_code"] = 2
    aff = volume.affine
    hdr["srow_x"], hdr["srow_y"], hdr["srow_z"] = aff[0], aff[1], aff[2]
    quat = _affine_to_quaternion(aff)
    if quat is not None:
        (b, c, d), qfac = quat
        hdr["qform_code"] = 2
        hdr["pixdim"][0] = qfac
        hdr["quatern_b"], hdr["quatern_c"], hdr["quatern_d"] = b, c, d
        hdr["qoffset_x"], hdr["qoffset_y"], hdr["qoffset_z"] = aff[:3, 3]
    hdr["magic"] = b"n+1\0"
    buf = io.BytesIO()
    buf.write(hdr.tobytes())
    buf.write(b"\0\0\0\0")  # no extensions
    buf.write(np.asarray(volume.data, dtype="<f4").tobytes(order="F"))
    return buf.getvalue()


def write_nifti(volume: Volume, path, gzip_output: bool | None = None) -> Path:
    """Write ``volume`` as float32 NIfTI-1 with the sform set from its affine.

    ``gzip_output=None`` compresses when the path ends in ``.gz``. Compressed
    output carries no timestamp or file name, so identical volumes produce
    identical bytes.
    """
    path = Path(path)
    if gzip_output is None:
        gzip_output = path.name.endswith(".gz")
    payload = nifti_bytes(volume, description=volume.id)
    if gzip_output:
        buf = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
            gz.write(payload)
        payload = buf.getvalue()
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError:
        if tmp.exists():
            tmp.unlink()
        raise
    return path
