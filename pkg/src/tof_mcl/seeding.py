"""
Random streams derived from a master seed.

A stream is identified by the master seed plus a tuple of keys, so any
trial or sensor can be reproduced in isolation without replaying the
streams of the others.
"""

import hashlib
from typing import Any
import numpy as np


def derive_seed(master_seed: int, *keys: Any) -> int:
    """
    Hash the master seed and the keys into a 128-bit integer.

    Keys are converted with str, so enum members should be passed by value.
    """
    digest = hashlib.blake2b(digest_size=16)
    digest.update(str(int(master_seed)).encode())
    for key in keys:
        digest.update(b'\x1f')
        digest.update(str(key).encode())
    return int.from_bytes(digest.digest(), 'little')


class StreamFactory:
    """
    Callable returning independent numpy generators.

    Args:
        master_seed: the seed every stream derives from.

    Attributes:
        master_seed: the seed every stream derives from.
    """

    def __init__(self, master_seed: int = 0) -> None:
        self.master_seed = int(master_seed)

    def __call__(self, *keys: Any) -> np.random.Generator:
        seed = derive_seed(self.master_seed, *keys)
        return np.random.default_rng(seed)

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}(master_seed={self.master_seed})'
