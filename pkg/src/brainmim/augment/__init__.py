"""3D patch augmentations: spatial (covariant) and intensity (invariant) groups."""
from brainmim.augment.config import ALL, INTENSITY, SPATIAL, AugmentationConfig
from brainmim.augment.intensity import (
    additive_noise,
    apply_intensity,
    bias_field,
    elastic_deform,
    gamma_transform,
    gaussian_blur,
    gibbs_ringing,
    motion_ghosting,
    multiplicative_noise,
    simulate_low_resolution,
)
from brainmim.augment.plan import AugmentationPlan, IntensityStep, sample_plan
from brainmim.augment.spatial import apply_spatial, rotate3d, rotation_matrix, scale3d

__all__ = [
    "ALL", "INTENSITY", "SPATIAL", "AugmentationConfig", "AugmentationPlan", "IntensityStep",
    "sample_plan", "apply_spatial", "apply_intensity", "rotate3d", "rotation_matrix", "scale3d",
    "elastic_deform", "gaussian_blur", "additive_noise", "multiplicative_noise", "gamma_transform",
    "motion_ghosting", "bias_field", "gibbs_ringing", "simulate_low_resolution",
]
