"""Augmentation plans: fully drawn, replayable records of one augmentation draw."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from brainmim.augment.config import INTENSITY, AugmentationConfig

SEED_BOUND = 2**63


@dataclass(frozen=True)
class IntensityStep:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in INTENSITY:
            raise ValueError(f"unknown intensity augmentation {self.name!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "params": self.params}


@dataclass(frozen=True)
class AugmentationPlan:
    """Spatial part (rotation angles in degrees about x, y, z and a scale
    factor, each ``None`` when not fired) plus the ordered intensity steps."""

    rotation: tuple[float, float, float] | None = None
    scale: float | None = None
    intensity: tuple[IntensityStep, ...] = ()

    @property
    def is_empty(self) -> bool:
        return self.rotation is None and self.scale is None and not self.intensity

    @property
    def spatial_only(self) -> "AugmentationPlan":
        return AugmentationPlan(self.rotation, self.scale, ())

    def fired(self) -> set[str]:
        names = {s.name for s in self.intensity}
        if self.rotation is not None:
            names.add("rotation")
        if self.scale is not None:
            names.add("scale")
        return names

    def to_dict(self) -> dict:
        return {
            "rotation": None if self.rotation is None else list(self.rotation),
            "scale": self.scale,
            "intensity": [s.to_dict() for s in self.intensity],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPlan":
        rot = d.get("rotation")
        return cls(
            rotation=None if rot is None else tuple(float(a) for a in rot),
            scale=None if d.get("scale") is None else float(d["scale"]),
            intensity=tuple(IntensityStep(s["name"], dict(s.get("params", {}))) for s in d.get("intensity", ())),
        )


def _fires(rng, p):
    return bool(rng.random() < p)


def _uniform(rng, r):
    return float(rng.uniform(r[0], r[1]))


def _seed(rng):
    return int(rng.integers(SEED_BOUND))


def sample_plan(config: AugmentationConfig, rng: np.random.Generator) -> AugmentationPlan:
    """Draw a plan from ``config``.

    Draw order is fixed: for each augmentation in table order (rotation,
    scale, elastic, blur, additive noise, multiplicative noise, gamma,
    ghosting, bias field, ringing, low resolution) one uniform decides whether
    it fires, followed, only if it fired, by its parameter draws:

    - rotation: per axis x, y, z an inclusion uniform, then the angle if included
    - scale: factor
    - elastic: alpha, sigma, field seed
    - blur: sigma
    - additive / multiplicative noise: sigma, draw seed
    - gamma: gamma, inversion uniform
    - ghosting: alpha, repetitions (inclusive integer range), axis
    - bias field: 20 polynomial coefficients
    - ringing: cut fraction, axis
    - low resolution: per axis an inclusion uniform, then the zoom if included

    Axes not included in a per-axis augmentation get the identity parameter
    (angle 0, zoom 1).
    """
    rotation = scale = None
    steps = []

    c = config.rotation
    if _fires(rng, c.p_sample):
        rotation = tuple(_uniform(rng, c.degrees) if _fires(rng, c.p_axis) else 0.0 for _ in range(3))
    c = config.scale
    if _fires(rng, c.p_sample):
        scale = _uniform(rng, c.factor)
    c = config.elastic
    if _fires(rng, c.p_sample):
        steps.append(IntensityStep("elastic", {"alpha": _uniform(rng, c.alpha), "sigma": _uniform(rng, c.sigma),
                                               "field_seed": _seed(rng)}))
    c = config.blur
    if _fires(rng, c.p_sample):
        steps.append(IntensityStep("blur", {"sigma": _uniform(rng, c.sigma)}))
    for name in ("additive_noise", "multiplicative_noise"):
        c = getattr(config, name)
        if _fires(rng, c.p_sample):
            steps.append(IntensityStep(name, {"sigma": _uniform(rng, c.sigma), "draw_seed": _seed(rng)}))
    c = config.gamma
    if _fires(rng, c.p_sample):
        steps.append(IntensityStep("gamma", {"gamma": _uniform(rng, c.gamma), "invert": _fires(rng, c.p_invert)}))
    c = config.ghosting
    if _fires(rng, c.p_sample):
        lo, hi = int(c.repetitions[0]), int(c.repetitions[1])
        steps.append(IntensityStep("ghosting", {"alpha": _uniform(rng, c.alpha),
                                                "repetitions": int(rng.integers(lo, hi + 1)),
                                                "axis": int(rng.integers(3))}))
    c = config.bias_field
    if _fires(rng, c.p_sample):
        coeffs = rng.uniform(c.coefficient[0], c.coefficient[1], size=20)
        steps.append(IntensityStep("bias_field", {"coefficients": [float(v) for v in coeffs]}))
    c = config.ringing
    if _fires(rng, c.p_sample):
        steps.append(IntensityStep("ringing", {"cut_fraction": _uniform(rng, c.cut_fraction),
                                               "axis": int(rng.integers(3))}))
    c = config.low_resolution
    if _fires(rng, c.p_sample):
        zoom = [_uniform(rng, c.zoom) if _fires(rng, c.p_axis) else 1.0 for _ in range(3)]
        steps.append(IntensityStep("low_resolution", {"zoom": zoom}))

    return AugmentationPlan(rotation=rotation, scale=scale, intensity=tuple(steps))
