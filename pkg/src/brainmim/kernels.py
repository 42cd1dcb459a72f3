"""Hot voxel loops: interpolating warps and 1D edge-clamped convolution.

Every public kernel has two implementations with the same contract, a numba
loop (``*_nb``) and a vectorized numpy path (``*_np``). The module-level names
dispatch to whichever backend :mod:`brainmim._accel` selected. Both paths
accumulate in float64 and return float32; they agree to rounding, and each is
deterministic on its own.

Coordinates are voxel indices (voxel centers at integers). Boundary modes:

``"constant"``
    every out-of-bounds neighbor read returns ``cval``.
``"clamp"``
    out-of-bounds neighbor reads take the nearest edge voxel.
"""
import numpy as np

from brainmim._accel import BACKEND, USE_NUMBA, njit

MODES = {"constant": 0, "clamp": 1}


def _mode_code(mode):
    try:
        return MODES[mode]
    except KeyError:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {sorted(MODES)}") from None


# ---------------------------------------------------------------------------
# numba loops


@njit
def _read_nb(data, i, j, k, clamp, cval):
    nx, ny, nz = data.shape
    if clamp:
        i = min(max(i, 0), nx - 1)
        j = min(max(j, 0), ny - 1)
        k = min(max(k, 0), nz - 1)
    elif i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
        return cval
    return float(data[i, j, k])


@njit
def _sample_nb(data, x, y, z, order, clamp, cval):
    if order == 0:
        return _read_nb(data, int(np.floor(x + 0.5)), int(np.floor(y + 0.5)),
                        int(np.floor(z + 0.5)), clamp, cval)
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    z0 = int(np.floor(z))
    fx = x - x0
    fy = y - y0
    fz = z - z0
    acc = 0.0
    for dx in range(2):
        wx = fx if dx else 1.0 - fx
        if wx == 0.0:
            continue
        for dy in range(2):
            wy = fy if dy else 1.0 - fy
            if wy == 0.0:
                continue
            for dz in range(2):
                wz = fz if dz else 1.0 - fz
                if wz == 0.0:
                    continue
                acc += wx * wy * wz * _read_nb(data, x0 + dx, y0 + dy, z0 + dz, clamp, cval)
    return acc


@njit
def warp_affine_nb(data, matrix, out_shape, order, mode, cval):
    clamp = mode == 1
    ox, oy, oz = out_shape[0], out_shape[1], out_shape[2]
    out = np.empty((ox, oy, oz), dtype=np.float32)
    m = matrix
    for i in range(ox):
        for j in range(oy):
            for k in range(oz):
                x = m[0, 0] * i + m[0, 1] * j + m[0, 2] * k + m[0, 3]
                y = m[1, 0] * i + m[1, 1] * j + m[1, 2] * k + m[1, 3]
                z = m[2, 0] * i + m[2, 1] * j + m[2, 2] * k + m[2, 3]
                out[i, j, k] = _sample_nb(data, x, y, z, order, clamp, cval)
    return out


@njit
def warp_displacement_nb(data, disp, order, mode, cval):
    clamp = mode == 1
    nx, ny, nz = data.shape
    out = np.empty((nx, ny, nz), dtype=np.float32)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                out[i, j, k] = _sample_nb(data, i + disp[0, i, j, k], j + disp[1, i, j, k],
                                          k + disp[2, i, j, k], order, clamp, cval)
    return out


@njit
def convolve_lines_nb(lines, weights):
    # lines: (m, n) rows convolved independently, edge clamp
    m, n = lines.shape
    taps = weights.shape[0]
    r = (taps - 1) // 2
    out = np.zeros((m, n), dtype=np.float64)
    buf = np.empty(n + 2 * r, dtype=np.float64)
    for row in range(m):
        for i in range(n + 2 * r):
            buf[i] = lines[row, min(max(i - r, 0), n - 1)]
        # tap-outer order keeps the inner loop free of a reduction so it vectorizes
        for t in range(taps):
            w = weights[t]
            for i in range(n):
                out[row, i] += w * buf[i + t]
    return out


# ---------------------------------------------------------------------------
# numpy fallbacks


def _sample_np(data, x, y, z, order, clamp, cval):
    shape = np.array(data.shape)
    src = data.astype(np.float64, copy=False)

    def read(ii, jj, kk):
        if clamp:
            return src[np.clip(ii, 0, shape[0] - 1), np.clip(jj, 0, shape[1] - 1),
                       np.clip(kk, 0, shape[2] - 1)]
        inside = ((ii >= 0) & (jj >= 0) & (kk >= 0)
                  & (ii < shape[0]) & (jj < shape[1]) & (kk < shape[2]))
        vals = src[np.where(inside, ii, 0), np.where(inside, jj, 0), np.where(inside, kk, 0)]
        return np.where(inside, vals, cval)

    if order == 0:
        return read(np.floor(x + 0.5).astype(np.int64), np.floor(y + 0.5).astype(np.int64),
                    np.floor(z + 0.5).astype(np.int64))
    x0 = np.floor(x)
    y0 = np.floor(y)
    z0 = np.floor(z)
    fx, fy, fz = x - x0, y - y0, z - z0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    z0 = z0.astype(np.int64)
    acc = np.zeros(x.shape, dtype=np.float64)
    for dx in (0, 1):
        wx = fx if dx else 1.0 - fx
        for dy in (0, 1):
            wy = fy if dy else 1.0 - fy
            for dz in (0, 1):
                wz = fz if dz else 1.0 - fz
                w = wx * wy * wz
                acc += np.where(w != 0.0, w * read(x0 + dx, y0 + dy, z0 + dz), 0.0)
    return acc


def warp_affine_np(data, matrix, out_shape, order, mode, cval):
    idx = np.indices(tuple(out_shape), dtype=np.float64).reshape(3, -1)
    coords = matrix[:, :3] @ idx + matrix[:, 3:4]
    vals = _sample_np(data, coords[0], coords[1], coords[2], order, mode == 1, cval)
    return vals.reshape(tuple(out_shape)).astype(np.float32)


def warp_displacement_np(data, disp, order, mode, cval):
    idx = np.indices(data.shape, dtype=np.float64)
    coords = idx + disp
    vals = _sample_np(data, coords[0], coords[1], coords[2], order, mode == 1, cval)
    return vals.astype(np.float32)


def convolve_lines_np(lines, weights):
    r = (weights.shape[0] - 1) // 2
    padded = np.pad(lines.astype(np.float64, copy=False), ((0, 0), (r, r)), mode="edge")
    n = lines.shape[1]
    out = np.zeros(lines.shape, dtype=np.float64)
    for t, w in enumerate(weights):
        out += w * padded[:, t:t + n]
    return out


# ---------------------------------------------------------------------------
# dispatching front ends

if USE_NUMBA:
    _warp_affine, _warp_displacement, _convolve_lines = warp_affine_nb, warp_displacement_nb, convolve_lines_nb
else:
    _warp_affine, _warp_displacement, _convolve_lines = warp_affine_np, warp_displacement_np, convolve_lines_np


def warp_affine(data, matrix, out_shape=None, order=1, mode="constant", cval=0.0):
    """Sample ``data`` at ``matrix @ [i, j, k, 1]`` for every output index.

    ``matrix`` is a 3x4 (or 4x4) map from output voxel indices to input voxel
    indices. ``order`` is 1 for trilinear or 0 for nearest neighbor.
    """
    data = np.ascontiguousarray(data)
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64)[:3, :4])
    out_shape = np.asarray(data.shape if out_shape is None else out_shape, dtype=np.int64)
    if order not in (0, 1):
        raise ValueError(f"interpolation order must be 0 or 1, got {order}")
    return _warp_affine(data, matrix, out_shape, int(order), _mode_code(mode), float(cval))


def warp_displacement(data, displacement, order=1, mode="clamp", cval=0.0):
    """Backward warp: output[p] = data(p + displacement[:, p])."""
    data = np.ascontiguousarray(data)
    displacement = np.ascontiguousarray(displacement, dtype=np.float64)
    if displacement.shape != (3,) + data.shape:
        raise ValueError(f"displacement shape {displacement.shape} does not match {(3,) + data.shape}")
    if order not in (0, 1):
        raise ValueError(f"interpolation order must be 0 or 1, got {order}")
    return _warp_displacement(data, displacement, int(order), _mode_code(mode), float(cval))


def convolve_axis(data, weights, axis):
    """Correlate ``data`` with an odd-length ``weights`` along ``axis``, edge clamp.

    Returns float64 so separable passes can chain without intermediate
    rounding.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.shape[0] % 2 != 1:
        raise ValueError("weights must be a 1D array of odd length")
    moved = np.moveaxis(np.asarray(data), axis, -1)
    lines = np.ascontiguousarray(moved, dtype=np.float64).reshape(-1, moved.shape[-1])
    out = _convolve_lines(lines, weights).reshape(moved.shape)
    return np.moveaxis(out, -1, axis)


__all__ = ["BACKEND", "warp_affine", "warp_displacement", "convolve_axis"]
