"""Intensity augmentations (applied to the network input only).

Elastic deformation sits here even though it moves voxels: it is part of
the intensity group and never reaches the reconstruction target.

All kernels take and return float32 patches of unchanged shape and compute
internally in float64. Random kernels are reproducible from their seed.
"""
from __future__ import annotations

import math

import numpy as np

from brainmim.augment.config import INTENSITY
from brainmim.kernels import convolve_axis, warp_affine, warp_displacement

EPS = 1e-8

# monomial exponents (i, j, k) of x^i y^j z^k, total degree <= 3, ordered by
# degree then descending powers of x, then y
BIAS_EXPONENTS = tuple(
    (i, j, d - i - j)
    for d in range(4)
    for i in range(d, -1, -1)
    for j in range(d - i, -1, -1)
)


def _f32(patch):
    return np.asarray(patch, dtype=np.float32)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized Gaussian taps over ``[-ceil(3 sigma), ceil(3 sigma)]``."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def gaussian_smooth(array, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with edge clamp, float64 result."""
    out = np.asarray(array, dtype=np.float64)
    if sigma == 0:
        return out.copy()
    w = gaussian_kernel1d(sigma)
    for axis in range(out.ndim):
        out = convolve_axis(out, w, axis)
    return out


def gaussian_blur(patch, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError("blur sigma must be >= 0")
    if sigma == 0:
        return _f32(patch).copy()
    return gaussian_smooth(patch, sigma).astype(np.float32)


def elastic_field(shape, alpha: float, sigma: float, field_seed: int) -> np.ndarray:
    """Backward displacement field of shape ``(3, *shape)`` in voxels.

    Per axis, uniform noise on [-1, 1] from ``np.random.default_rng(field_seed)``
    (drawn as one ``(3, *shape)`` block) is Gaussian-smoothed with ``sigma``
    and scaled by ``alpha``.
    """
    rng = np.random.default_rng(field_seed)
    noise = rng.uniform(-1.0, 1.0, size=(3,) + tuple(shape))
    return np.stack([gaussian_smooth(noise[a], sigma) for a in range(3)]) * alpha


def elastic_deform(patch, alpha: float, sigma: float, field_seed: int) -> np.ndarray:
    if alpha < 0 or not sigma > 0:
        raise ValueError("elastic deformation needs alpha >= 0 and sigma > 0")
    patch = _f32(patch)
    if alpha == 0:
        return patch.copy()
    disp = elastic_field(patch.shape, alpha, sigma, field_seed)
    return warp_displacement(patch, disp, order=1, mode="clamp")


def additive_noise(patch, sigma: float, draw_seed: int) -> np.ndarray:
    patch = _f32(patch)
    if sigma == 0:
        return patch.copy()
    noise = np.random.default_rng(draw_seed).standard_normal(patch.shape)
    return (patch + sigma * noise).astype(np.float32)


def multiplicative_noise(patch, sigma: float, draw_seed: int) -> np.ndarray:
    patch = _f32(patch)
    if sigma == 0:
        return patch.copy()
    noise = np.random.default_rng(draw_seed).standard_normal(patch.shape)
    return (patch * (1.0 + sigma * noise)).astype(np.float32)


def gamma_transform(patch, gamma: float, invert: bool = False) -> np.ndarray:
    """Gamma on the patch's own [min, max] range, optionally reflected first."""
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    patch = _f32(patch)
    data = patch.astype(np.float64)
    lo, hi = float(data.min()), float(data.max())
    span = hi - lo
    if span < EPS:
        return patch.copy()
    if invert:
        data = (lo + hi) - data
    unit = np.clip((data - lo) / span, 0.0, 1.0)
    return (unit ** gamma * span + lo).astype(np.float32)


def _along(values, axis, ndim=3):
    shape = [1] * ndim
    shape[axis] = -1
    return np.reshape(values, shape)


def motion_ghosting(patch, alpha: float, repetitions: int, axis: int) -> np.ndarray:
    """Attenuate every k-space plane whose index along ``axis`` is not a multiple
    of ``repetitions`` by ``alpha`` (index 0 is DC)."""
    if not 0 < alpha <= 1 or repetitions < 2:
        raise ValueError("ghosting needs 0 < alpha <= 1 and repetitions >= 2")
    patch = _f32(patch)
    n = patch.shape[axis]
    k = np.fft.fft(patch.astype(np.float64), axis=axis)
    gain = np.where(np.arange(n) % repetitions == 0, 1.0, alpha)
    return np.fft.ifft(k * _along(gain, axis), axis=axis).real.astype(np.float32)


def gibbs_ringing(patch, cut_fraction: float, axis: int) -> np.ndarray:
    """Zero frequencies along ``axis`` whose centered index magnitude exceeds
    ``cut_fraction`` times the Nyquist index ``n / 2``."""
    if not 0 < cut_fraction <= 1:
        raise ValueError("cut_fraction must be in (0, 1]")
    patch = _f32(patch)
    n = patch.shape[axis]
    centered = np.abs(np.fft.fftfreq(n) * n)
    keep = centered <= cut_fraction * (n / 2.0)
    k = np.fft.fft(patch.astype(np.float64), axis=axis)
    return np.fft.ifft(k * _along(keep, axis), axis=axis).real.astype(np.float32)


def _unit_coords(n):
    return np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)


def bias_polynomial(shape, coefficients) -> np.ndarray:
    """Degree-3 trivariate polynomial on coordinates spanning [-1, 1] per axis."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != (len(BIAS_EXPONENTS),):
        raise ValueError(f"need {len(BIAS_EXPONENTS)} bias coefficients, got {coefficients.shape}")
    x = _unit_coords(shape[0])[:, None, None]
    y = _unit_coords(shape[1])[None, :, None]
    z = _unit_coords(shape[2])[None, None, :]
    poly = np.zeros(tuple(shape))
    for c, (i, j, k) in zip(coefficients, BIAS_EXPONENTS):
        if c != 0.0:
            poly += c * (x ** i) * (y ** j) * (z ** k)
    return poly


def bias_field(patch, coefficients) -> np.ndarray:
    patch = _f32(patch)
    field = np.exp(bias_polynomial(patch.shape, coefficients))
    return (patch * field).astype(np.float32)


def simulate_low_resolution(patch, zoom) -> np.ndarray:
    """Trilinear downsampling to ``round(shape * zoom)``, nearest-neighbor back up."""
    zoom = np.asarray(zoom, dtype=np.float64)
    if zoom.shape != (3,) or np.any(zoom <= 0) or np.any(zoom > 1):
        raise ValueError(f"zoom must be three factors in (0, 1], got {zoom}")
    patch = _f32(patch)
    shape = np.array(patch.shape)
    small = np.maximum(1, np.round(shape * zoom)).astype(np.int64)
    if np.array_equal(small, shape):
        return patch.copy()
    step = shape / small
    down = np.zeros((3, 4))
    down[:, :3] = np.diag(step)
    down[:, 3] = 0.5 * step - 0.5
    low = warp_affine(patch, down, small, order=1, mode="clamp")
    up = [np.minimum(np.floor((np.arange(n) + 0.5) * m / n).astype(np.int64), m - 1)
          for n, m in zip(shape, small)]
    return np.ascontiguousarray(low[np.ix_(*up)])


KERNELS = {
    "elastic": lambda p, a: elastic_deform(p, a["alpha"], a["sigma"], a["field_seed"]),
    "blur": lambda p, a: gaussian_blur(p, a["sigma"]),
    "additive_noise": lambda p, a: additive_noise(p, a["sigma"], a["draw_seed"]),
    "multiplicative_noise": lambda p, a: multiplicative_noise(p, a["sigma"], a["draw_seed"]),
    "gamma": lambda p, a: gamma_transform(p, a["gamma"], a.get("invert", False)),
    "ghosting": lambda p, a: motion_ghosting(p, a["alpha"], a["repetitions"], a["axis"]),
    "bias_field": lambda p, a: bias_field(p, a["coefficients"]),
    "ringing": lambda p, a: gibbs_ringing(p, a["cut_fraction"], a["axis"]),
    "low_resolution": lambda p, a: simulate_low_resolution(p, a["zoom"]),
}
assert tuple(KERNELS) == INTENSITY


def apply_intensity(patch, plan) -> np.ndarray:
    """Apply the plan's intensity steps in the fixed group order (see ``INTENSITY``)."""
    out = _f32(patch).copy()
    steps = sorted(plan.intensity, key=lambda s: INTENSITY.index(s.name))
    for step in steps:
        out = KERNELS[step.name](out, step.params)
    return out
