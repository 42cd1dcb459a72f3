"""In-memory volume representation, orientation codes and basic statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# world-axis index -> (letter for +, letter for -)
_AXIS_LETTERS = (("R", "L"), ("A", "P"), ("S", "I"))
_LETTER_TO_AXIS = {"R": (0, 1), "L": (0, -1), "A": (1, 1), "P": (1, -1), "S": (2, 1), "I": (2, -1)}

# columns whose dominant component is less than this factor above the
# runner-up have no well-defined anatomical direction
OBLIQUE_RATIO = 1.05


class OrientationError(ValueError):
    """The affine has no unambiguous axis-aligned orientation code."""


def validate_orientation(code: str) -> str:
    code = str(code).upper()
    if len(code) != 3 or any(c not in _LETTER_TO_AXIS for c in code):
        raise ValueError(f"invalid orientation code {code!r}")
    axes = {_LETTER_TO_AXIS[c][0] for c in code}
    if len(axes) != 3:
        raise ValueError(f"orientation code {code!r} repeats an anatomical axis")
    return code


def orientation_axes(code: str) -> tuple[tuple[int, int], ...]:
    """Per voxel axis, the (world axis, sign) pair the code names."""
    return tuple(_LETTER_TO_AXIS[c] for c in validate_orientation(code))


def affine_axes(affine, strict: bool = False) -> tuple[tuple[int, int], ...]:
    """Dominant (world axis, sign) of each voxel axis of ``affine``.

    With ``strict`` the dominant component of every column must beat the
    second-largest by ``OBLIQUE_RATIO``; otherwise only the argmax is used.
    Raises :class:`OrientationError` when columns do not form a permutation.
    """
    rot = np.asarray(affine, dtype=np.float64)[:3, :3]
    out = []
    for col in range(3):
        mags = np.abs(rot[:, col])
        order = np.argsort(mags)[::-1]
        if mags[order[0]] == 0.0:
            raise OrientationError(f"affine column {col} is zero")
        if strict and mags[order[1]] > 0 and mags[order[0]] / mags[order[1]] < OBLIQUE_RATIO:
            raise OrientationError(
                f"affine column {col} is oblique (ratio {mags[order[0]] / mags[order[1]]:.3f} < {OBLIQUE_RATIO})")
        world = int(order[0])
        out.append((world, 1 if rot[world, col] > 0 else -1))
    if len({w for w, _ in out}) != 3:
        raise OrientationError("affine columns do not map onto distinct world axes")
    return tuple(out)


def orientation_from_affine(affine, strict: bool = False) -> str:
    """Three-letter axis code (e.g. ``"RAS"``) of a voxel-to-world affine."""
    return "".join(_AXIS_LETTERS[w][0 if s > 0 else 1] for w, s in affine_axes(affine, strict))


@dataclass(frozen=True)
class BoundingBox:
    """Voxel box, ``lower`` inclusive and ``upper`` exclusive."""

    lower: tuple[int, int, int]
    upper: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lower)
        hi = tuple(int(v) for v in self.upper)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("bounding box needs three lower and three upper indices")
        if any(a < 0 or a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid bounding box lower={lo} upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(a, b) for a, b in zip(self.lower, self.upper))

    def fits(self, shape: Sequence[int]) -> bool:
        return all(b <= n for b, n in zip(self.upper, shape))


@dataclass(frozen=True, eq=False)
class Volume:
    """Immutable 3D float32 volume indexed ``data[x, y, z]``.

    ``affine`` maps voxel indices to world millimeters (RAS+ world). When it is
    omitted a diagonal affine built from ``spacing`` is used; when ``spacing``
    is omitted it is the column norms of the affine (or 1 mm). ``orientation``
    is derived from the affine when omitted and checked against it otherwise.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] | None = None
    affine: np.ndarray | None = None
    orientation: str | None = None
    id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, order="C", copy=True)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        if data.size == 0:
            raise ValueError("volume data is empty")
        bad = int(np.count_nonzero(~np.isfinite(data)))
        if bad:
            raise ValueError(f"volume data contains {bad} non-finite values")
        data.setflags(write=False)

        if self.spacing is None:
            if self.affine is None:
                spacing = (1.0, 1.0, 1.0)
            else:
                spacing = tuple(float(s) for s in np.linalg.norm(np.asarray(self.affine, dtype=np.float64)[:3, :3], axis=0))
        else:
            spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
            raise ValueError(f"spacing must be three positive finite values, got {spacing}")

        if self.affine is None:
            affine = np.diag(spacing + (1.0,))
        else:
            affine = np.array(self.affine, dtype=np.float64)
            if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
                raise ValueError("affine must be a finite 4x4 matrix")
        affine.setflags(write=False)

        derived = orientation_from_affine(affine)
        if self.orientation is None:
            orientation = derived
        else:
            orientation = validate_orientation(self.orientation)
            if orientation != derived:
                raise ValueError(f"orientation {orientation} inconsistent with affine ({derived})")

        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "affine", affine)
        object.__setattr__(self, "orientation", orientation)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def replace(self, **changes) -> "Volume":
        """Copy with fields replaced; orientation is re-derived unless given."""
        kw = dict(data=self.data, spacing=self.spacing, affine=self.affine, id=self.id, meta=dict(self.meta))
        kw.update(changes)
        return Volume(**kw)

    def voxel_to_world(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=np.float64)
        return idx @ self.affine[:3, :3].T + self.affine[:3, 3]


def _values(volume) -> np.ndarray:
    arr = volume.data if isinstance(volume, Volume) else np.asarray(volume)
    if arr.size == 0:
        raise ValueError("statistics of an empty volume are undefined")
    return arr.ravel()


def percentile(volume, q: float) -> float:
    """Linear-interpolation percentile at fraction ``q`` of all voxel values.

    With sorted values ``v`` and rank ``r = q * (n - 1)`` the result is
    ``v[floor(r)] + (r - floor(r)) * (v[ceil(r)] - v[floor(r)])``.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    flat = _values(volume).astype(np.float64)
    rank = q * (flat.size - 1)
    lo = int(math.floor(rank))
    hi = int(math.ceil(rank))
    part = np.partition(flat, (lo, hi)) if hi != lo else np.partition(flat, lo)
    v_lo, v_hi = part[lo], part[hi]
    return float(v_lo + (rank - lo) * (v_hi - v_lo))


def volume_stats(volume) -> tuple[float, float, float, float]:
    """Population (mean, std, min, max), accumulated in float64."""
    flat = _values(volume).astype(np.float64)
    mean = float(flat.mean())
    std = float(np.sqrt(np.mean((flat - mean) ** 2)))
    return mean, std, float(flat.min()), float(flat.max())
