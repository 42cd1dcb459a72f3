"""Reconstruction loss and segmentation overlap on plain arrays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from brainmim.masking import MaskMap, expand_mask

REGIONS = ("masked_only", "all_voxels")


@dataclass(frozen=True)
class LossConfig:
    region: str = "masked_only"
    reduction: str = "mean"

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"region must be one of {REGIONS}, got {self.region!r}")
        if self.reduction != "mean":
            raise ValueError(f"only 'mean' reduction is supported, got {self.reduction!r}")


def masked_mse(prediction, target, mask: MaskMap, config: LossConfig = LossConfig()) -> float:
    """Mean squared error over masked voxels (default) or over the whole patch."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError(f"shape mismatch: {prediction.shape} vs {target.shape}")
    sq = (prediction - target) ** 2
    if config.region == "all_voxels":
        return float(sq.mean())
    if tuple(mask.patch_shape) != prediction.shape:
        raise ValueError(f"mask shape {mask.patch_shape} does not match {prediction.shape}")
    sel = expand_mask(mask)
    if not sel.any():
        raise ValueError("masked_only loss over an empty mask")
    return float(sq[sel].mean())


def dice_score(prediction, truth) -> float:
    """``2|P & T| / (|P| + |T|)``; two empty masks score 1.0."""
    p = np.asarray(prediction).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    total = int(p.sum()) + int(t.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, t).sum()) / total
