import numpy as np
import pytest

from brainmim.volume import Volume


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def blob_volume(shape=(20, 18, 16), spacing=(1.0, 1.0, 1.0), affine=None, seed=0, margin=3):
    """Positive block of noise surrounded by a zero border."""
    r = np.random.default_rng(seed)
    data = np.zeros(shape, dtype=np.float32)
    inner = tuple(slice(margin, n - margin) for n in shape)
    data[inner] = r.uniform(10.0, 100.0, size=data[inner].shape)
    return Volume(data, spacing=spacing, affine=affine)


@pytest.fixture
def volume():
    return blob_volume()


def build_manifest(root, n=4, shape=(20, 18, 16), labels=False):
    """Write ``n`` preprocessed-looking volumes and a manifest under ``root``."""
    from brainmim.nifti import write_nifti
    from brainmim.pipeline import Manifest, ManifestEntry, file_checksum

    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        vol = blob_volume(shape=shape, seed=i)
        name = f"vol{i:02d}.nii.gz"
        write_nifti(vol, root / name)
        label = None
        if labels:
            label = f"vol{i:02d}.label.nii.gz"
            lab = np.digitize(vol.data, [1.0, 40.0, 70.0]).astype(np.float32)
            write_nifti(Volume(lab), root / label)
        entries.append(ManifestEntry(id=f"vol{i:02d}", path=name, shape=shape, spacing=(1.0, 1.0, 1.0),
                                     checksum=file_checksum(root / name), source="site" + "ab"[i % 2], label=label))
    manifest = Manifest(entries=entries, created="1970-01-01T00:00:00Z", root=root)
    manifest.write(root / "manifest.jsonl")
    return manifest
