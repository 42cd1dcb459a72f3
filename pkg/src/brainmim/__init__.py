"""Brain MRI data pathway for masked-image-modeling pretraining.

NIfTI ingestion, volume preprocessing, 3D patch augmentation, subpatch
masking and sample construction, plus reconstruction loss and Dice.
"""
from brainmim._accel import BACKEND
from brainmim.masking import MaskMap, MaskSpec, apply_mask, expand_mask, generate_mask
from brainmim.metrics import LossConfig, dice_score, masked_mse
from brainmim.nifti import read_nifti, write_nifti
from brainmim.preprocess import PreprocessConfig, preprocess_volume
from brainmim.volume import BoundingBox, Volume, percentile, volume_stats

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Volume", "BoundingBox", "percentile", "volume_stats", "read_nifti", "write_nifti",
    "PreprocessConfig", "preprocess_volume", "MaskSpec", "MaskMap", "generate_mask", "expand_mask",
    "apply_mask", "LossConfig", "masked_mse", "dice_score",
]
