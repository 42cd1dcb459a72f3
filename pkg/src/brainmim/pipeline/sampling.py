"""Patch extraction, pretraining/finetuning sample construction and epoch iteration."""
from __future__ import annotations

import collections
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from brainmim.augment import AugmentationConfig, AugmentationPlan, apply_intensity, apply_spatial, sample_plan
from brainmim.masking import MaskMap, MaskSpec, apply_mask, expand_mask, generate_mask
from brainmim.pipeline.manifest import Manifest, ManifestError
from brainmim.pipeline.streams import keyed_rng
from brainmim.volume import Volume

MODES = ("pretrain", "finetune", "none")


class PipelineError(RuntimeError):
    """A manifest entry failed while building its sample."""


def _triple(size) -> tuple[int, int, int]:
    if np.isscalar(size):
        size = (size,) * 3
    out = tuple(int(s) for s in size)
    if len(out) != 3 or any(s < 1 for s in out):
        raise ValueError(f"patch size must be three positive integers, got {size}")
    return out


@dataclass(frozen=True)
class SamplerConfig:
    patch_size: tuple[int, int, int] = (128, 128, 128)
    pad_value: float = 0.0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    mask: MaskSpec = field(default_factory=MaskSpec)
    mode: str = "pretrain"

    def __post_init__(self):
        object.__setattr__(self, "patch_size", _triple(self.patch_size))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        return {"patch_size": list(self.patch_size), "pad_value": self.pad_value, "mode": self.mode,
                "augmentation": self.augmentation.to_dict(), "mask": self.mask.to_dict()}

    @classmethod
    def from_dict(cls, d: dict | None) -> "SamplerConfig":
        d = dict(d or {})
        kw = {k: d[k] for k in ("patch_size", "pad_value", "mode") if k in d}
        return cls(augmentation=AugmentationConfig.from_dict(d.get("augmentation")),
                   mask=MaskSpec.from_dict(d.get("mask")), **kw)


@dataclass(eq=False)
class PretrainSample:
    input: np.ndarray
    target: np.ndarray
    mask: MaskMap | None
    provenance: dict

    def voxel_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.zeros(self.input.shape, dtype=bool)
        return expand_mask(self.mask)


class FinetuneSample(NamedTuple):
    image: np.ndarray
    label: np.ndarray
    provenance: dict


def patch_at(data, origin, size, pad_value=0.0) -> np.ndarray:
    """Window of ``size`` starting at ``origin``; parts outside ``data`` get ``pad_value``.

    Negative origins mean leading padding.
    """
    data = np.asarray(data)
    size = _triple(size)
    out = np.full(size, pad_value, dtype=np.float32)
    src, dst = [], []
    for o, s, n in zip(origin, size, data.shape):
        lo, hi = max(o, 0), min(o + s, n)
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - o, hi - o))
    out[tuple(dst)] = data[tuple(src)]
    return out


def extract_patch(volume, size, rng: np.random.Generator, pad_value=0.0):
    """Uniform random crop of ``size``; returns ``(patch, origin)``.

    For each axis in x, y, z order: if the volume is at least as large as the
    patch, one integer origin is drawn uniformly from every valid position;
    otherwise the volume is centered with symmetric padding (the extra voxel
    goes to the high side) and the origin is the negative leading pad.
    """
    data = volume.data if isinstance(volume, Volume) else np.asarray(volume)
    size = _triple(size)
    origin = []
    for n, s in zip(data.shape, size):
        if n >= s:
            origin.append(int(rng.integers(0, n - s + 1)))
        else:
            origin.append(-((s - n) // 2))
    origin = tuple(origin)
    return patch_at(data, origin, size, pad_value), origin


def make_pretrain_sample(volume, config: SamplerConfig, rng: np.random.Generator, *,
                         volume_id=None, epoch=None, seed=None) -> PretrainSample:
    """Build one sample. Draws come from ``rng`` in the order crop, plan, mask.

    ``pretrain``: target = spatially augmented patch, input = the same patch
    after intensity augmentation and masking.
    ``finetune``: spatial augmentation only, no mask; input equals target.
    ``none``: raw patch for both, no plan draws and no mask.
    """
    patch, origin = extract_patch(volume, config.patch_size, rng, config.pad_value)
    mask = None
    if config.mode == "none":
        plan = AugmentationPlan()
        target = patch
        inp = patch.copy()
    else:
        plan = sample_plan(config.augmentation, rng)
        if config.mode == "finetune":
            plan = plan.spatial_only
        spatial = apply_spatial(patch, plan)
        target = spatial
        if config.mode == "pretrain":
            mask = generate_mask(spatial.shape, config.mask, rng)
            inp = apply_mask(apply_intensity(spatial, plan), mask, config.mask.fill_value)
        else:
            inp = spatial.copy()
    if volume_id is None and isinstance(volume, Volume):
        volume_id = volume.id
    provenance = {"volume_id": volume_id, "epoch": epoch, "seed": seed, "mode": config.mode,
                  "crop_origin": list(origin), "patch_size": list(config.patch_size),
                  "plan": plan.to_dict()}
    return PretrainSample(inp, target, mask, provenance)


def target_from_provenance(volume, provenance: dict, pad_value=0.0) -> np.ndarray:
    """Rebuild a sample's target from the raw volume and its recorded crop and plan."""
    data = volume.data if isinstance(volume, Volume) else np.asarray(volume)
    patch = patch_at(data, provenance["crop_origin"], provenance["patch_size"], pad_value)
    return apply_spatial(patch, AugmentationPlan.from_dict(provenance["plan"]))


def make_finetune_sample(image, label, config: SamplerConfig, rng: np.random.Generator) -> FinetuneSample:
    """Crop image and label identically and apply one spatial draw to both.

    The image is resampled trilinearly, the label by nearest neighbor. Label
    padding and out-of-bounds reads use the label's minimum value, so the
    output never contains a label id absent from the input.
    """
    img = image.data if isinstance(image, Volume) else np.asarray(image, dtype=np.float32)
    lab = label.data if isinstance(label, Volume) else np.asarray(label, dtype=np.float32)
    if img.shape != lab.shape:
        raise ValueError(f"image shape {img.shape} and label shape {lab.shape} differ")
    if isinstance(image, Volume) and isinstance(label, Volume) and not np.allclose(
            image.affine, label.affine, atol=1e-4):
        raise ValueError("image and label affines differ")
    background = float(lab.min())
    img_patch, origin = extract_patch(img, config.patch_size, rng, config.pad_value)
    lab_patch = patch_at(lab, origin, config.patch_size, background)
    plan = sample_plan(config.augmentation, rng).spatial_only
    out_img = apply_spatial(img_patch, plan, order=1, cval=config.pad_value)
    out_lab = apply_spatial(lab_patch, plan, order=0, cval=background)
    provenance = {"crop_origin": list(origin), "patch_size": list(config.patch_size), "plan": plan.to_dict(),
                  "mode": "finetune"}
    return FinetuneSample(out_img, out_lab, provenance)


def epoch_order(n: int, epoch: int, seed: int) -> np.ndarray:
    """Visit order of manifest entries for an epoch (a keyed shuffle)."""
    return keyed_rng(seed, epoch, "shuffle").permutation(n)


def sample_rng(seed, entry_id, epoch, purpose):
    return keyed_rng(seed, entry_id, epoch, purpose)


def default_workers() -> int:
    env = os.environ.get("BRAINMIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _build(manifest: Manifest, entry, epoch, seed, config: SamplerConfig):
    try:
        volume = manifest.load(entry)
        rng = sample_rng(seed, entry.id, epoch, config.mode)
        if config.mode == "finetune" and entry.label is not None:
            fs = make_finetune_sample(volume, manifest.load_label(entry), config, rng)
            fs.provenance.update(volume_id=entry.id, epoch=epoch, seed=seed)
            return fs
        return make_pretrain_sample(volume, config, rng, volume_id=entry.id, epoch=epoch, seed=seed)
    except ManifestError as exc:
        raise PipelineError(str(exc)) from exc
    except Exception as exc:
        raise PipelineError(f"entry {entry.id!r}: {exc}") from exc


def epoch_iter(manifest: Manifest, epoch: int, seed: int, config: SamplerConfig,
               workers: int = 1, prefetch: int | None = None) -> Iterator:
    """Yield exactly one sample per manifest entry for ``epoch``.

    Entries are visited in a shuffle keyed by ``(seed, epoch)``. Each sample's
    random stream is keyed by ``(seed, entry id, epoch, mode)``, so content
    does not depend on the worker count or on scheduling. With ``workers > 1``
    samples are built on a thread pool with at most ``prefetch`` (default
    ``2 * workers``) in flight, and are still delivered in visit order. The
    first failing entry raises :class:`PipelineError` and ends iteration.

    In ``finetune`` mode, entries that carry a label yield
    :class:`FinetuneSample`; all other cases yield :class:`PretrainSample`.
    """
    entries = [manifest.entries[i] for i in epoch_order(len(manifest), epoch, seed)]
    if workers <= 1:
        for entry in entries:
            yield _build(manifest, entry, epoch, seed, config)
        return
    depth = max(1, prefetch if prefetch is not None else 2 * workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = collections.deque()
        it = iter(entries)
        try:
            for entry in it:
                pending.append(pool.submit(_build, manifest, entry, epoch, seed, config))
                if len(pending) >= depth:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()
        finally:
            for fut in pending:
                fut.cancel()


def sample_digest(sample) -> str:
    """SHA-256 over a sample's arrays and provenance."""
    h = hashlib.sha256()
    if isinstance(sample, FinetuneSample):
        arrays = (sample.image, sample.label)
    else:
        arrays = (sample.input, sample.target, sample.voxel_mask().astype(np.uint8))
    for arr in arrays:
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(json.dumps(sample.provenance, sort_keys=True).encode())
    return h.hexdigest()
