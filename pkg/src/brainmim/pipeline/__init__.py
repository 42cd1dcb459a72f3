"""Sample construction and epoch iteration over a manifest of preprocessed volumes."""
from brainmim.pipeline.dump import read_sample_blob, sample_blob, write_sample_blob, write_sample_dir
from brainmim.pipeline.manifest import Manifest, ManifestEntry, ManifestError, file_checksum
from brainmim.pipeline.sampling import (
    MODES,
    FinetuneSample,
    PipelineError,
    PretrainSample,
    SamplerConfig,
    epoch_iter,
    epoch_order,
    extract_patch,
    make_finetune_sample,
    make_pretrain_sample,
    patch_at,
    sample_digest,
    target_from_provenance,
)
from brainmim.pipeline.streams import keyed_rng

__all__ = [
    "Manifest", "ManifestEntry", "ManifestError", "file_checksum", "MODES", "FinetuneSample",
    "PipelineError", "PretrainSample", "SamplerConfig", "epoch_iter", "epoch_order", "extract_patch",
    "make_finetune_sample", "make_pretrain_sample", "patch_at", "sample_digest", "target_from_provenance",
    "keyed_rng", "read_sample_blob", "sample_blob", "write_sample_blob", "write_sample_dir",
]
