"""Deterministic seed derivation for every stochastic stage."""

import hashlib

_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Mix arbitrary ints/strings into a stable 64-bit seed.

    Same parts always give the same seed, on any platform, so every
    stage of a run can branch its own RNG stream off the global seed.
    """
    payload = b"\x1f".join(str(p).encode("utf-8") for p in parts)
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little") & _MASK64
