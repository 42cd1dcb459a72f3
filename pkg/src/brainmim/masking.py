"""Subpatch masking for masked image modeling."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MaskSpec:
    subpatch_size: int = 4
    mask_probability: float = 0.6
    fill_value: float = 0.0

    def __post_init__(self):
        if int(self.subpatch_size) < 1:
            raise ValueError(f"subpatch_size must be >= 1, got {self.subpatch_size}")
        if not 0.0 <= self.mask_probability <= 1.0:
            raise ValueError(f"mask_probability must be in [0, 1], got {self.mask_probability}")
        object.__setattr__(self, "subpatch_size", int(self.subpatch_size))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "MaskSpec":
        return cls(**(d or {}))


def grid_shape(patch_shape, subpatch_size) -> tuple[int, ...]:
    return tuple(-(-int(n) // subpatch_size) for n in patch_shape)


@dataclass(frozen=True, eq=False)
class MaskMap:
    """Boolean grid over subpatches (True = masked) and the voxel shape it covers."""

    grid: np.ndarray
    patch_shape: tuple[int, int, int]
    subpatch_size: int = 4

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=bool)
        shape = tuple(int(n) for n in self.patch_shape)
        if grid.shape != grid_shape(shape, self.subpatch_size):
            raise ValueError(f"grid shape {grid.shape} does not cover patch {shape} "
                             f"with subpatch size {self.subpatch_size}")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "patch_shape", shape)

    @property
    def masked_fraction(self) -> float:
        """Fraction of subpatches masked (not voxels)."""
        return float(self.grid.mean())


def generate_mask(patch_shape, spec: MaskSpec, rng: np.random.Generator) -> MaskMap:
    """Mask every subpatch independently with probability ``spec.mask_probability``.

    Consumes one uniform per subpatch, in C order over the grid.
    """
    if any(int(n) < 1 for n in patch_shape):
        raise ValueError(f"patch shape must be positive, got {tuple(patch_shape)}")
    shape = grid_shape(patch_shape, spec.subpatch_size)
    grid = rng.random(shape) < spec.mask_probability
    return MaskMap(grid, tuple(patch_shape), spec.subpatch_size)


def expand_mask(mask: MaskMap) -> np.ndarray:
    """Voxel-level boolean mask; boundary subpatches are truncated to the patch."""
    s = mask.subpatch_size
    full = mask.grid.repeat(s, axis=0).repeat(s, axis=1).repeat(s, axis=2)
    nx, ny, nz = mask.patch_shape
    return np.ascontiguousarray(full[:nx, :ny, :nz])


def apply_mask(patch, mask: MaskMap, fill_value: float = 0.0) -> np.ndarray:
    patch = np.asarray(patch, dtype=np.float32)
    if patch.shape != mask.patch_shape:
        raise ValueError(f"patch shape {patch.shape} does not match mask shape {mask.patch_shape}")
    return np.where(expand_mask(mask), np.float32(fill_value), patch)
