"""Stable seed derivation for order-independent parallel work."""

import hashlib


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit sub-seed from a master seed and identifying parts.

    Uses SHA-256 so results are identical across processes and platforms
    (Python's built-in hash() is randomized per process).
    """
    blob = repr((int(master_seed),) + tuple(parts)).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
