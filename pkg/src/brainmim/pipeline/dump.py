"""On-disk sample dumps.

Directory layout (one directory per sample)::

    input.nii.gz  target.nii.gz  [mask.nii.gz]  provenance.json     # pretrain / finetune / none
    image.nii.gz  label.nii.gz   provenance.json                    # finetune pairs

The mask file holds the voxel-level mask as 0/1 and is omitted when the sample
has no mask. Patches are written with an identity affine: after augmentation
they no longer sit on the source grid.

Blob layout (``AMS1``, little-endian)::

    char[4]  magic "AMS1"
    uint32   nx, ny, nz
    uint32   voxel count (nx * ny * nz)
    uint32   masked voxel count
    float32  input[voxel count]
    float32  target[voxel count]
    uint8    mask[voxel count]

Arrays are stored x-fastest (Fortran order), matching NIfTI.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from brainmim.nifti import write_nifti
from brainmim.pipeline.sampling import FinetuneSample, PretrainSample
from brainmim.volume import Volume

BLOB_MAGIC = b"AMS1"
_BLOB_HEADER = struct.Struct("<4s5I")


def _write(arr, path):
    write_nifti(Volume(arr, spacing=(1.0, 1.0, 1.0)), path, gzip_output=True)


def write_provenance(provenance: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    return path


def write_sample_dir(sample, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if isinstance(sample, FinetuneSample):
        _write(sample.image, directory / "image.nii.gz")
        _write(sample.label, directory / "label.nii.gz")
    else:
        _write(sample.input, directory / "input.nii.gz")
        _write(sample.target, directory / "target.nii.gz")
        if sample.mask is not None:
            _write(sample.voxel_mask().astype(np.float32), directory / "mask.nii.gz")
    write_provenance(sample.provenance, directory / "provenance.json")
    return directory


def sample_blob(sample: PretrainSample) -> bytes:
    mask = sample.voxel_mask()
    shape = sample.input.shape
    n = int(np.prod(shape))
    parts = [
        _BLOB_HEADER.pack(BLOB_MAGIC, *shape, n, int(mask.sum())),
        np.asarray(sample.input, dtype="<f4").tobytes(order="F"),
        np.asarray(sample.target, dtype="<f4").tobytes(order="F"),
        mask.astype(np.uint8).tobytes(order="F"),
    ]
    return b"".join(parts)


def write_sample_blob(sample: PretrainSample, path) -> Path:
    path = Path(path)
    path.write_bytes(sample_blob(sample))
    return path


def read_sample_blob(path):
    """Return ``(input, target, mask)`` arrays from an ``AMS1`` blob."""
    raw = Path(path).read_bytes()
    if len(raw) < _BLOB_HEADER.size:
        raise ValueError(f"{path}: truncated blob header")
    magic, nx, ny, nz, n, n_masked = _BLOB_HEADER.unpack_from(raw)
    if magic != BLOB_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if n != nx * ny * nz:
        raise ValueError(f"{path}: voxel count {n} does not match shape {(nx, ny, nz)}")
    expected = _BLOB_HEADER.size + 9 * n
    if len(raw) != expected:
        raise ValueError(f"{path}: size {len(raw)} bytes, expected {expected}")
    off = _BLOB_HEADER.size
    shape = (nx, ny, nz)
    inp = np.frombuffer(raw, "<f4", n, off).reshape(shape, order="F")
    tgt = np.frombuffer(raw, "<f4", n, off + 4 * n).reshape(shape, order="F")
    mask = np.frombuffer(raw, "u1", n, off + 8 * n).reshape(shape, order="F").astype(bool)
    if int(mask.sum()) != n_masked:
        raise ValueError(f"{path}: masked count mismatch")
    return inp.astype(np.float32), tgt.astype(np.float32), mask
