"""Seed derivation: one top-level seed, stable sub-seeds per purpose."""
import hashlib


def derive_seed(seed: int, *labels) -> int:
    """63-bit seed from ``seed`` and any labels, stable across runs and platforms."""
    text = "/".join([str(int(seed))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little") >> 1
