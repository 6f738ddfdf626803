"""Deterministic seed derivation: every random stream hangs off a master seed."""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def derive_seed(*parts):
    """Stable 63-bit integer seed from a mix of ints and string labels."""
    ss = np.random.SeedSequence([_key(p) for p in parts])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def derive_rng(*parts):
    return np.random.default_rng(derive_seed(*parts))
