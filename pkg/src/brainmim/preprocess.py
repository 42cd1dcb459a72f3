"""Volume preprocessing: RAS reorientation, isotropic resampling, upper
percentile clipping, volume-level normalization and foreground cropping.

:func:`preprocess_volume` runs the steps in a fixed order::

    reorient -> resample -> clip -> normalize -> crop

The crop box is found on the clipped volume (before normalization moves the
background away from zero) and applied to the normalized one, so
normalization statistics are those of the whole resampled volume.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from brainmim.kernels import warp_affine
from brainmim.volume import BoundingBox, Volume, affine_axes, percentile, volume_stats

EPS = 1e-8
NORMALIZATIONS = ("zscore", "unit_interval")
# guard against corrupt pixdim blowing up the resampled grid (~1 GiB of float32)
DEFAULT_MAX_VOXELS = 2**28


@dataclass(frozen=True)
class PreprocessConfig:
    target_spacing: float = 1.0
    clip_percentile: float = 0.99
    normalization: str = "zscore"
    foreground_threshold: float = 0.0
    pad_value: float = 0.0
    max_voxels: int = DEFAULT_MAX_VOXELS

    def __post_init__(self):
        if not self.target_spacing > 0:
            raise ValueError(f"target_spacing must be > 0, got {self.target_spacing}")
        if not 0.0 < self.clip_percentile <= 1.0:
            raise ValueError(f"clip_percentile must be in (0, 1], got {self.clip_percentile}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def reorient_to_ras(volume: Volume) -> Volume:
    """Permute and flip voxel axes so the volume is RAS.

    World coordinates of every voxel are unchanged: the returned affine
    composes the old one with the index permutation. Oblique affines without a
    clear dominant direction per axis raise :class:`OrientationError`.
    """
    axes = affine_axes(volume.affine, strict=True)
    if volume.orientation == "RAS" and all(w == i and s > 0 for i, (w, s) in enumerate(axes)):
        return volume.replace(orientation="RAS")
    # new axis j holds old axis src[j]
    src = [0, 0, 0]
    flips = [False, False, False]
    for old, (world, sign) in enumerate(axes):
        src[world] = old
        flips[world] = sign < 0
    data = np.transpose(volume.data, src)
    for j in range(3):
        if flips[j]:
            data = np.flip(data, axis=j)
    # old index = perm @ new index + offset
    index_map = np.eye(4)
    index_map[:3, :3] = 0
    for j in range(3):
        old = src[j]
        if flips[j]:
            index_map[old, j] = -1.0
            index_map[old, 3] = volume.shape[old] - 1
        else:
            index_map[old, j] = 1.0
    spacing = tuple(volume.spacing[src[j]] for j in range(3))
    return volume.replace(data=np.ascontiguousarray(data), spacing=spacing,
                          affine=volume.affine @ index_map, orientation="RAS")


def resample_isotropic(volume: Volume, target_spacing: float = 1.0,
                       max_voxels: int = DEFAULT_MAX_VOXELS, order: int = 1) -> Volume:
    """Trilinear resampling to ``target_spacing`` mm on every axis.

    Output voxel ``j`` along an axis samples input index
    ``(j + 0.5) * target / spacing - 0.5`` (voxel centers aligned to the
    common field of view); reads outside the grid clamp to the edge.
    ``order=0`` switches to nearest neighbor, for label maps.
    """
    if volume.orientation != "RAS":
        raise ValueError(f"resample_isotropic expects a RAS volume, got {volume.orientation}")
    if not target_spacing > 0:
        raise ValueError("target_spacing must be > 0")
    in_shape = np.array(volume.shape)
    spacing = np.array(volume.spacing)
    out_shape = np.maximum(1, np.round(in_shape * spacing / target_spacing)).astype(np.int64)
    total = int(np.prod(out_shape))
    if total > max_voxels:
        raise ValueError(f"resampled shape {tuple(out_shape)} ({total} voxels) exceeds budget of {max_voxels}")
    step = target_spacing / spacing
    index_map = np.eye(4)
    index_map[:3, :3] = np.diag(step)
    index_map[:3, 3] = 0.5 * step - 0.5
    if np.array_equal(out_shape, in_shape) and np.all(step == 1.0):
        data = volume.data
    else:
        data = warp_affine(volume.data, index_map, out_shape, order=order, mode="clamp")
    return volume.replace(data=data, spacing=(float(target_spacing),) * 3,
                          affine=volume.affine @ index_map)


def clip_percentile(volume: Volume, q: float = 0.99) -> Volume:
    """Replace values above the ``q`` percentile by that percentile (upper clip only)."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    ceiling = np.float32(percentile(volume, q))
    return volume.replace(data=np.minimum(volume.data, ceiling))


def normalize(volume: Volume, mode: str = "zscore") -> Volume:
    """Volume-level intensity normalization.

    ``zscore``: ``(v - mean) / max(std, 1e-8)``.
    ``unit_interval``: ``(v - min) / max(max - min, 1e-8)``.
    """
    mean, std, lo, hi = volume_stats(volume)
    data = volume.data.astype(np.float64)
    if mode == "zscore":
        out = (data - mean) / max(std, EPS)
    elif mode == "unit_interval":
        out = (data - lo) / max(hi - lo, EPS)
    else:
        raise ValueError(f"unknown normalization {mode!r}")
    return volume.replace(data=out.astype(np.float32))


def foreground_box(data, threshold: float = 0.0) -> BoundingBox:
    """Smallest box holding every voxel strictly above ``threshold``."""
    fg = np.asarray(data) > threshold
    if not fg.any():
        raise ValueError(f"no voxel above foreground threshold {threshold}")
    lower, upper = [], []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        hits = np.flatnonzero(fg.any(axis=other))
        lower.append(int(hits[0]))
        upper.append(int(hits[-1]) + 1)
    return BoundingBox(tuple(lower), tuple(upper))


def crop(volume: Volume, box: BoundingBox) -> Volume:
    """Crop to ``box``; the affine is translated so voxel positions keep their world coordinates."""
    if not box.fits(volume.shape):
        raise ValueError(f"box {box} exceeds volume shape {volume.shape}")
    shift = np.eye(4)
    shift[:3, 3] = box.lower
    return volume.replace(data=volume.data[box.slices], affine=volume.affine @ shift)


def crop_to_foreground(volume: Volume, threshold: float = 0.0) -> tuple[Volume, BoundingBox]:
    box = foreground_box(volume.data, threshold)
    return crop(volume, box), box


def preprocess_steps(volume: Volume, config: PreprocessConfig | None = None):
    """Run the pipeline and return ``[(step name, Volume), ...]`` for every stage.

    The last entry is the final output; the others are kept for inspection.
    """
    config = config or PreprocessConfig()
    steps = [("input", volume)]
    v = reorient_to_ras(volume)
    steps.append(("reorient", v))
    v = resample_isotropic(v, config.target_spacing, config.max_voxels)
    steps.append(("resample", v))
    v = clip_percentile(v, config.clip_percentile)
    steps.append(("clip", v))
    box = foreground_box(v.data, config.foreground_threshold)
    v = normalize(v, config.normalization)
    steps.append(("normalize", v))
    v = crop(v, box)
    v.meta["crop_box"] = {"lower": list(box.lower), "upper": list(box.upper)}
    steps.append(("crop", v))
    return steps


def preprocess_volume(volume: Volume, config: PreprocessConfig | None = None) -> Volume:
    return preprocess_steps(volume, config)[-1][1]


def preprocess_label(label: Volume, box: BoundingBox, config: PreprocessConfig | None = None) -> Volume:
    """Geometric steps only, for a label map aligned with an image: reorient,
    nearest-neighbor resample, crop to the image's box."""
    config = config or PreprocessConfig()
    v = reorient_to_ras(label)
    v = resample_isotropic(v, config.target_spacing, config.max_voxels, order=0)
    return crop(v, box)
