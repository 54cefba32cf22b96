"""
Binary coupling masks
"""
from dataclasses import dataclass

import numpy as np

from src.numerics.tensor import Tensor


@dataclass(frozen=True)
class Mask:
    """A {0, 1} tensor broadcastable against the coupling input"""

    kind: str
    parity: int
    values: Tensor

    @property
    def inverse(self) -> Tensor:
        return 1.0 - self.values


def checkerboard_mask(height: int, width: int, parity: int = 0) -> Mask:
    """mask[h][w] = 1 iff (h + w + parity) is even; shape (1, 1, H, W)"""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    values = ((rows + cols + parity) % 2 == 0).astype(np.float64)
    return Mask('checkerboard', parity % 2, values.reshape(1, 1, height, width))


def channel_mask(channels: int, parity: int = 0, spatial: bool = True) -> Mask:
    """
    mask[c] = 1 iff (c + parity) is even

    Shape (1, C, 1, 1) for image tensors, (1, C) for flat vectors.
    """
    values = ((np.arange(channels) + parity) % 2 == 0).astype(np.float64)
    shape = (1, channels, 1, 1) if spatial else (1, channels)
    return Mask('channel', parity % 2, values.reshape(shape))
