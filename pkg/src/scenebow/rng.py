"""Deterministic seed derivation.

A single master seed fans out into independent per-task seeds keyed by
string labels, so adding or reordering one randomized stage never perturbs
the draws of another.
"""

import hashlib


def derive_seed(master: int, *labels) -> int:
    """64-bit seed from a master seed and a label path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"\x1f" + str(label).encode())
    return int.from_bytes(h.digest(), "little")
