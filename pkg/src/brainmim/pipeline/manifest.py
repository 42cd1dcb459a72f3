"""Manifest of preprocessed volumes.

On disk a manifest is JSON Lines. The first line is a header object::

    {"format": "brainmim-manifest", "version": 1, "created": "...",
     "preprocess_config_hash": "...", "config": {...}}

followed by one entry per line with fields in this order::

    id, path, shape, spacing, checksum, source, label

``path`` (and ``label``, the optional label-map path) are relative to the
manifest's directory. ``checksum`` is ``"sha256:<hex>"`` of the file bytes
and is verified on every load.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from brainmim.nifti import decode_nifti
from brainmim.volume import Volume

FORMAT = "brainmim-manifest"
VERSION = 1
ENTRY_FIELDS = ("id", "path", "shape", "spacing", "checksum", "source", "label")


class ManifestError(ValueError):
    """Malformed manifest or an entry that cannot be loaded."""


def file_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return "sha256:" + h.hexdigest()


def creation_timestamp() -> str:
    """UTC ISO timestamp, pinned by ``SOURCE_DATE_EPOCH`` when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    shape: tuple[int, int, int]
    spacing: tuple[float, float, float]
    checksum: str
    source: str = "default"
    label: str | None = None

    def to_dict(self) -> dict:
        d = {"id": self.id, "path": self.path, "shape": list(self.shape), "spacing": list(self.spacing),
             "checksum": self.checksum, "source": self.source}
        d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        missing = [k for k in ENTRY_FIELDS[:5] if k not in d]
        if missing:
            raise ManifestError(f"manifest entry missing {missing}: {d}")
        return cls(id=str(d["id"]), path=str(d["path"]), shape=tuple(int(v) for v in d["shape"]),
                   spacing=tuple(float(v) for v in d["spacing"]), checksum=str(d["checksum"]),
                   source=str(d.get("source", "default")), label=d.get("label"))


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    created: str = ""
    preprocess_config_hash: str = ""
    config: dict = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ManifestError(f"duplicate manifest ids: {dupes}")
        self.root = Path(self.root)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, relpath: str) -> Path:
        p = Path(relpath)
        return p if p.is_absolute() else self.root / p

    def _load(self, entry: ManifestEntry, relpath: str, checksum: str | None) -> Volume:
        path = self.resolve(relpath)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise ManifestError(f"entry {entry.id!r}: cannot read {path}: {exc}") from None
        if checksum is not None:
            actual = "sha256:" + hashlib.sha256(raw).hexdigest()
            if actual != checksum:
                raise ManifestError(f"entry {entry.id!r}: checksum mismatch for {path}")
        try:
            vol = decode_nifti(raw, path)
        except ValueError as exc:
            raise ManifestError(f"entry {entry.id!r}: {exc}") from None
        return vol.replace(id=entry.id)

    def load(self, entry: ManifestEntry) -> Volume:
        """Read and checksum-verify an entry's volume."""
        return self._load(entry, entry.path, entry.checksum)

    def load_label(self, entry: ManifestEntry) -> Volume | None:
        if entry.label is None:
            return None
        return self._load(entry, entry.label, None)

    def header(self) -> dict:
        return {"format": FORMAT, "version": VERSION, "created": self.created,
                "preprocess_config_hash": self.preprocess_config_hash, "config": self.config}

    def dumps(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        lines += [json.dumps(e.to_dict()) for e in self.entries]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        try:
            lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from None
        if not lines:
            raise ManifestError(f"{path}: empty manifest file (no header)")
        try:
            head = json.loads(lines[0])
            if head.get("format") != FORMAT:
                raise ManifestError(f"{path}: not a {FORMAT} file")
            entries = [ManifestEntry.from_dict(json.loads(ln)) for ln in lines[1:]]
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON ({exc})") from None
        return cls(entries=entries, created=head.get("created", ""),
                   preprocess_config_hash=head.get("preprocess_config_hash", ""),
                   config=head.get("config", {}), root=path.parent)
