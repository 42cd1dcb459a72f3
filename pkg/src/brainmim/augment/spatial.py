"""Spatial augmentations. These are applied to both the network input and the
reconstruction target, so they live apart from the intensity kernels."""
from __future__ import annotations

import numpy as np

from brainmim.kernels import warp_affine


def rotation_matrix(angles_deg) -> np.ndarray:
    """Forward rotation ``Rz @ Ry @ Rx`` (x applied first) for angles in degrees."""
    ax, ay, az = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _about_center(linear, shape) -> np.ndarray:
    # index map p -> linear @ (p - c) + c
    center = (np.asarray(shape, dtype=np.float64) - 1.0) / 2.0
    m = np.zeros((3, 4))
    m[:, :3] = linear
    m[:, 3] = center - linear @ center
    return m


def rotate3d(patch, angles, order=1, cval=0.0) -> np.ndarray:
    """Rotate about the patch center by ``angles`` (degrees about x, then y, then z).

    Backward mapping with trilinear (``order=1``) or nearest (``order=0``)
    sampling; reads outside the patch return ``cval``.
    """
    patch = np.asarray(patch, dtype=np.float32)
    if not np.any(np.asarray(angles, dtype=np.float64)):
        return patch.copy()
    inverse = rotation_matrix(angles).T
    return warp_affine(patch, _about_center(inverse, patch.shape), patch.shape, order, "constant", cval)


def scale3d(patch, factor, order=1, cval=0.0) -> np.ndarray:
    """Zoom about the patch center by ``factor`` (>1 magnifies); shape is kept."""
    if not factor > 0:
        raise ValueError(f"scale factor must be > 0, got {factor}")
    patch = np.asarray(patch, dtype=np.float32)
    if factor == 1.0:
        return patch.copy()
    return warp_affine(patch, _about_center(np.eye(3) / factor, patch.shape), patch.shape, order, "constant", cval)


def apply_spatial(patch, plan, order=1, cval=0.0) -> np.ndarray:
    """Apply the plan's rotation, then its scale. Other plan entries are ignored."""
    out = np.asarray(patch, dtype=np.float32)
    if plan.rotation is not None:
        out = rotate3d(out, plan.rotation, order, cval)
    if plan.scale is not None:
        out = scale3d(out, plan.scale, order, cval)
    return out.copy() if out is patch else out
