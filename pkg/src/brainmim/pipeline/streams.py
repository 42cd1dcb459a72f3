"""Counter-based random streams keyed by name.

A stream is a Philox generator whose 128-bit key is the SHA-256 digest of the
key parts. Streams for different (seed, entry, epoch, purpose) tuples are
independent and can be created in any order or on any worker, which is what
makes sample content independent of scheduling.
"""
import hashlib
import json

import numpy as np


def stream_key(*parts) -> int:
    blob = json.dumps([str(p) for p in parts], separators=(",", ":")).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:16], "little")


def keyed_rng(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(*parts)))
