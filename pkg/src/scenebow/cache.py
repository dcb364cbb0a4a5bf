"""Binary on-disk cache for per-image keypoints and descriptors.

Layout (little-endian): 5-byte magic "SCAN1", 8-byte detector-parameter
fingerprint, uint32 keypoint count, then per keypoint four float32 fields
(x, y, scale, orientation) followed by 128 float32 descriptor values.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import CacheFingerprintMismatch, CorruptCache
from .sift import SiftParams, arrays_to_pairs, pairs_to_arrays

MAGIC = b"SCAN1"
_RECORD_FLOATS = 4 + 128


def save_descriptors(path, params: SiftParams, pairs) -> None:
    """Write keypoint/descriptor pairs for one image."""
    kps, descs = pairs_to_arrays(pairs)
    save_descriptor_arrays(path, params, kps, descs)


def save_descriptor_arrays(path, params: SiftParams, kps: np.ndarray, descs: np.ndarray) -> None:
    kps = np.ascontiguousarray(kps, dtype="<f4")
    descs = np.ascontiguousarray(descs, dtype="<f4")
    if kps.shape != (len(kps), 4) or descs.shape != (len(kps), 128):
        raise ValueError(f"bad shapes {kps.shape} / {descs.shape}")
    records = np.hstack([kps, descs])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(params.fingerprint())
        fh.write(struct.pack("<I", len(kps)))
        fh.write(records.tobytes())


def load_descriptor_arrays(path, params: SiftParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read one cache file back as ((n,4) keypoints, (n,128) descriptors).

    When `params` is given, a stored fingerprint that differs raises
    CacheFingerprintMismatch; truncated or mislabeled files raise CorruptCache.
    """
    path = Path(path)
    blob = path.read_bytes()
    header = len(MAGIC) + 8 + 4
    if len(blob) < header or blob[: len(MAGIC)] != MAGIC:
        raise CorruptCache(f"{path}: missing or wrong magic")
    stored = blob[len(MAGIC) : len(MAGIC) + 8]
    if params is not None and stored != params.fingerprint():
        raise CacheFingerprintMismatch(
            f"{path}: cache was built with different detector parameters"
        )
    (count,) = struct.unpack_from("<I", blob, len(MAGIC) + 8)
    body = blob[header:]
    expected = count * _RECORD_FLOATS * 4
    if len(body) != expected:
        raise CorruptCache(f"{path}: expected {expected} payload bytes, found {len(body)}")
    records = np.frombuffer(body, dtype="<f4").reshape(count, _RECORD_FLOATS)
    return records[:, :4].copy(), records[:, 4:].copy()


def load_descriptors(path, params: SiftParams | None = None):
    """Pair-structured variant of `load_descriptor_arrays`."""
    kps, descs = load_descriptor_arrays(path, params)
    return arrays_to_pairs(kps, descs)
