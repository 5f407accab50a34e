"""seeded random number helpers

every random draw in the package comes from a generator built here, keyed by
a tuple of parts (global seed, image id, epoch, ...). no global state.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """hash parts into a 64-bit seed

    Args:
        parts: any values with a stable str() (ints, strings)

    Returns:
        unsigned 64-bit integer
    """
    key = "\x1f".join(str(part) for part in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(*parts) -> np.random.Generator:
    """counter-based generator (Philox) seeded from parts"""
    return np.random.Generator(np.random.Philox(derive_seed(*parts)))


def scene_seed(global_seed: int, image_id: str, epoch: int) -> int:
    """per-scene seed: regenerated every epoch, reproducible per (seed, image, epoch)"""
    return derive_seed(global_seed, image_id, epoch)
