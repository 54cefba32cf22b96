"""
Counter-based random streams

RngStream wraps numpy's Philox bit generator. A stream is identified by a
seed plus a path of keys; `split` appends a key, so child streams depend only
on (seed, path) and never on how many numbers other streams have drawn.
"""
import hashlib
from typing import Tuple, Union

import numpy as np

Key = Union[int, str, float]


def _key_to_int(key: Key) -> int:
    """Map a split key to a stable 32-bit integer"""
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool) and 0 <= int(key) < 2 ** 32:
        return int(key)
    digest = hashlib.sha256(repr(key).encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


class RngStream:
    """Deterministic, splittable random stream"""

    def __init__(self, seed: int, path: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def split(self, *keys: Key) -> 'RngStream':
        """Child stream keyed by `keys`; independent of this stream's position"""
        return RngStream(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    def normal(self, shape) -> np.ndarray:
        return self._generator.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws in [0, 1)"""
        return self._generator.random(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=replace)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._generator.integers(low, high, size=shape)

    def integer_seed(self) -> int:
        """A 31-bit seed for libraries that take integer random_state"""
        return int(self._generator.integers(0, 2 ** 31 - 1))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
