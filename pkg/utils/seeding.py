"""
Named sub-seeds.

All randomness in a run flows from the master seed; each consumer asks for
a generator by name so that adding a stage never shifts another stage's stream.
"""

import hashlib

import numpy as np


def derive_seed(master_seed, *names):
    """
    Derive a 64-bit seed from the master seed and a name path.

    Args:
        master_seed: Run-level integer seed
        *names: Path components, e.g. ("gen-attacks", "BIM", 17)

    Returns:
        int: Deterministic sub-seed
    """
    key = ":".join([str(int(master_seed))] + [str(n) for n in names])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed, *names):
    """Return a numpy Generator seeded from derive_seed(master_seed, *names)."""
    return np.random.default_rng(derive_seed(master_seed, *names))
