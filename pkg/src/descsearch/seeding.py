"""Deterministic seed derivation shared by the stochastic components."""

import hashlib


def mix_seed(*parts) -> int:
    """Collapse labeled parts into a 64-bit seed, stable across processes.

    Python's hash() is salted per process, so anything that must be
    reproducible (epoch shuffles, positive sampling, subset selection)
    derives its RNG seed through this instead.
    """
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(joined.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
