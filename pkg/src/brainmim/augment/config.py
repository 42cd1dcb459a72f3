"""Augmentation probabilities and parameter ranges.

Defaults reproduce the pretraining augmentation table: two spatial
transforms (rotation, scaling) and nine intensity transforms. Every entry has
``p_sample``; per-axis transforms also carry ``p_axis``. Ranges are
``(low, high)`` pairs drawn uniformly.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import ClassVar


def _check_prob(name, p):
    if not 0.0 <= float(p) <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {p}")


def _check_range(name, r):
    if len(r) != 2 or not float(r[0]) <= float(r[1]):
        raise ValueError(f"{name} must be an ordered (low, high) pair, got {r}")


class _Spec:
    """Shared validation and (de)serialization for the per-augmentation entries."""

    _ranges: ClassVar[tuple[str, ...]] = ()

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name.startswith("p_"):
                _check_prob(f"{type(self).__name__}.{f.name}", value)
                object.__setattr__(self, f.name, float(value))
            elif f.name in self._ranges:
                value = tuple(value)
                _check_range(f"{type(self).__name__}.{f.name}", value)
                object.__setattr__(self, f.name, value)

    def to_dict(self) -> dict:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v
                for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d: dict):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class RotationSpec(_Spec):
    p_sample: float = 0.2
    p_axis: float = 0.66
    degrees: tuple[float, float] = (-30.0, 30.0)
    _ranges: ClassVar = ("degrees",)


@dataclass(frozen=True)
class ScaleSpec(_Spec):
    p_sample: float = 0.2
    factor: tuple[float, float] = (0.9, 1.1)
    _ranges: ClassVar = ("factor",)

    def __post_init__(self):
        super().__post_init__()
        if self.factor[0] <= 0:
            raise ValueError("scale factors must be positive")


@dataclass(frozen=True)
class ElasticSpec(_Spec):
    p_sample: float = 0.33
    alpha: tuple[float, float] = (200.0, 600.0)
    sigma: tuple[float, float] = (20.0, 30.0)
    _ranges: ClassVar = ("alpha", "sigma")


@dataclass(frozen=True)
class BlurSpec(_Spec):
    p_sample: float = 0.1
    sigma: tuple[float, float] = (0.0, 1.0)
    _ranges: ClassVar = ("sigma",)


@dataclass(frozen=True)
class NoiseSpec(_Spec):
    p_sample: float = 0.2
    sigma: tuple[float, float] = (1e-4, 1e-3)
    _ranges: ClassVar = ("sigma",)


@dataclass(frozen=True)
class GammaSpec(_Spec):
    p_sample: float = 0.2
    gamma: tuple[float, float] = (0.7, 1.5)
    p_invert: float = 0.01
    _ranges: ClassVar = ("gamma",)


@dataclass(frozen=True)
class GhostingSpec(_Spec):
    p_sample: float = 0.2
    alpha: tuple[float, float] = (0.85, 0.95)
    repetitions: tuple[int, int] = (2, 11)
    _ranges: ClassVar = ("alpha", "repetitions")


@dataclass(frozen=True)
class BiasFieldSpec(_Spec):
    p_sample: float = 0.33
    coefficient: tuple[float, float] = (-0.5, 0.5)
    _ranges: ClassVar = ("coefficient",)


@dataclass(frozen=True)
class RingingSpec(_Spec):
    p_sample: float = 0.2
    cut_fraction: tuple[float, float] = (0.5, 1.0)
    _ranges: ClassVar = ("cut_fraction",)


@dataclass(frozen=True)
class LowResSpec(_Spec):
    p_sample: float = 0.1
    p_axis: float = 0.33
    zoom: tuple[float, float] = (0.5, 1.0)
    _ranges: ClassVar = ("zoom",)


SPATIAL = ("rotation", "scale")
INTENSITY = ("elastic", "blur", "additive_noise", "multiplicative_noise", "gamma",
             "ghosting", "bias_field", "ringing", "low_resolution")
ALL = SPATIAL + INTENSITY


@dataclass(frozen=True)
class AugmentationConfig:
    rotation: RotationSpec = field(default_factory=RotationSpec)
    scale: ScaleSpec = field(default_factory=ScaleSpec)
    elastic: ElasticSpec = field(default_factory=ElasticSpec)
    blur: BlurSpec = field(default_factory=BlurSpec)
    additive_noise: NoiseSpec = field(default_factory=NoiseSpec)
    multiplicative_noise: NoiseSpec = field(default_factory=NoiseSpec)
    gamma: GammaSpec = field(default_factory=GammaSpec)
    ghosting: GhostingSpec = field(default_factory=GhostingSpec)
    bias_field: BiasFieldSpec = field(default_factory=BiasFieldSpec)
    ringing: RingingSpec = field(default_factory=RingingSpec)
    low_resolution: LowResSpec = field(default_factory=LowResSpec)

    def p_sample(self) -> dict[str, float]:
        return {name: getattr(self, name).p_sample for name in ALL}

    def with_p_sample(self, names=ALL, p: float = 0.0) -> "AugmentationConfig":
        """Copy with ``p_sample`` set to ``p`` for each augmentation in ``names``."""
        changes = {n: dataclasses.replace(getattr(self, n), p_sample=p) for n in names}
        return dataclasses.replace(self, **changes)

    @classmethod
    def disabled(cls) -> "AugmentationConfig":
        return cls().with_p_sample(ALL, 0.0)

    def without_intensity(self) -> "AugmentationConfig":
        return self.with_p_sample(INTENSITY, 0.0)

    def to_dict(self) -> dict:
        return {name: getattr(self, name).to_dict() for name in ALL}

    @classmethod
    def from_dict(cls, d: dict | None) -> "AugmentationConfig":
        """Build from a mapping of augmentation name to its fields; missing entries keep defaults."""
        d = d or {}
        unknown = set(d) - set(ALL)
        if unknown:
            raise ValueError(f"unknown augmentations: {sorted(unknown)}")
        base = cls()
        changes = {}
        for name, values in d.items():
            spec = getattr(base, name)
            merged = {**spec.to_dict(), **(values or {})}
            changes[name] = type(spec).from_dict(merged)
        return dataclasses.replace(base, **changes)
