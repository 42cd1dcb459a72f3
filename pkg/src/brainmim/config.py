"""Runtime configuration shared by the command-line tools.

A config file is YAML (JSON is accepted too) with these optional top-level
keys; anything omitted keeps its default::

    seed: 0
    workers: 4
    preprocess:   {target_spacing: 1.0, clip_percentile: 0.99, normalization: zscore, ...}
    sampler:      {patch_size: [128, 128, 128], pad_value: 0.0, mode: pretrain}
    augmentation: {rotation: {p_sample: 0.2, p_axis: 0.66, degrees: [-30, 30]}, ...}
    mask:         {subpatch_size: 4, mask_probability: 0.6, fill_value: 0.0}

The defaults are 1 mm spacing, 99th-percentile clipping, z-scoring, the
standard augmentation table, 4^3 subpatches masked with p = 0.6 and 128^3
patches.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from brainmim.augment import AugmentationConfig
from brainmim.masking import MaskSpec
from brainmim.pipeline.sampling import SamplerConfig
from brainmim.preprocess import PreprocessConfig

_KEYS = {"seed", "workers", "verbosity", "preprocess", "sampler", "augmentation", "mask"}


@dataclass(frozen=True)
class CliConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seed: int = 0
    workers: int | None = None
    verbosity: int = 0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "preprocess": self.preprocess.to_dict(),
            "sampler": {k: v for k, v in self.sampler.to_dict().items() if k not in ("augmentation", "mask")},
            "augmentation": self.sampler.augmentation.to_dict(),
            "mask": self.sampler.mask.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "CliConfig":
        d = dict(d or {})
        unknown = set(d) - _KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        sampler = dict(d.get("sampler") or {})
        sampler["augmentation"] = d.get("augmentation")
        sampler["mask"] = d.get("mask")
        return cls(
            preprocess=PreprocessConfig.from_dict(d.get("preprocess") or {}),
            sampler=SamplerConfig.from_dict(sampler),
            seed=int(d.get("seed", 0)),
            workers=None if d.get("workers") is None else int(d["workers"]),
            verbosity=int(d.get("verbosity", 0)),
        )

    def override(self, *, seed=None, workers=None, mode=None, patch_size=None) -> "CliConfig":
        """Apply command-line flags on top of the file values."""
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=int(seed))
        if workers is not None:
            cfg = dataclasses.replace(cfg, workers=int(workers))
        sampler_changes = {}
        if mode is not None:
            sampler_changes["mode"] = mode
        if patch_size is not None:
            sampler_changes["patch_size"] = patch_size
        if sampler_changes:
            cfg = dataclasses.replace(cfg, sampler=dataclasses.replace(cfg.sampler, **sampler_changes))
        return cfg


def load_config(path=None) -> CliConfig:
    if path is None:
        return CliConfig()
    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    if data is not None and not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return CliConfig.from_dict(data)


def dump_config(config: CliConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def augmentation_from_file(path) -> AugmentationConfig:
    return load_config(path).sampler.augmentation


def mask_from_file(path) -> MaskSpec:
    return load_config(path).sampler.mask
