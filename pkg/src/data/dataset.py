"""
In-memory datasets of images or 2D points keyed by sorted sample ids
"""
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.numerics.rng import RngStream
from src.utils.errors import ConfigError, DataError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

IMAGE = 'image'
POINTS = 'points'


def index_ids(count: int, prefix: str = '') -> List[str]:
    """Zero-padded ids whose lexicographic order equals index order"""
    width = max(6, len(str(max(count - 1, 0))))
    return [f"{prefix}{i:0{width}d}" for i in range(count)]


class Dataset:
    """
    Ordered samples with unique ids

    Images are stored as uint8 (N, C, H, W); points as float64 (N, 2).
    Samples are kept sorted by id, so iteration order depends only on ids and seed.
    """

    def __init__(self, ids: Sequence[str], samples: np.ndarray, source: Optional[str] = None):
        ids = [str(i) for i in ids]
        samples = np.asarray(samples)
        if len(ids) != samples.shape[0]:
            raise DataError(f"{len(ids)} ids for {samples.shape[0]} samples")
        if len(set(ids)) != len(ids):
            raise DataError("Sample ids must be unique")
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self.ids = [ids[i] for i in order]
        self.samples = samples[order] if order != list(range(len(ids))) else samples
        self.source = source

    @classmethod
    def from_array(cls, samples: np.ndarray, source: Optional[str] = None, prefix: str = '') -> 'Dataset':
        samples = np.asarray(samples)
        return cls(index_ids(samples.shape[0], prefix), samples, source)

    @property
    def kind(self) -> str:
        return IMAGE if self.samples.ndim == 4 else POINTS

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.samples.shape[1:])

    def __len__(self) -> int:
        return len(self.ids)

    def __repr__(self) -> str:
        return f"Dataset({len(self)} {self.kind} samples of shape {self.sample_shape}, source={self.source})"

    def batches(self, batch_size: int, rng: Optional[RngStream] = None,
                drop_last: bool = False) -> Iterator[Tuple[List[str], np.ndarray]]:
        """
        Yield (ids, samples) batches

        Args:
            batch_size: Samples per batch
            rng: If given, shuffle with this stream; otherwise keep id order
            drop_last: Skip a trailing partial batch
        """
        if batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {batch_size}")
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            chunk = order[start:start + batch_size]
            if drop_last and len(chunk) < batch_size:
                break
            yield [self.ids[i] for i in chunk], self.samples[chunk]

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset([self.ids[i] for i in indices], self.samples[indices], self.source)

    def sample_subset(self, n: int, rng: RngStream) -> 'Dataset':
        """Random subset of n samples without replacement"""
        if n > len(self):
            raise DataError(f"Requested {n} samples but {self.source or 'the dataset'} holds only {len(self)}")
        return self.subset(np.sort(rng.choice(len(self), n, replace=False)))

    def split(self, fraction: float, rng: RngStream, min_main: int = 0) -> Tuple['Dataset', 'Dataset']:
        """
        Random (main, held-out) split with round(fraction * N) held-out samples

        The held-out part shrinks when needed so that the main part keeps at
        least min_main samples.
        """
        if not 0.0 <= fraction < 1.0:
            raise ConfigError(f"Split fraction must lie in [0, 1), got {fraction}")
        held = min(int(round(fraction * len(self))), max(len(self) - min_main, 0))
        if held == 0:
            return self, self.subset([])
        order = rng.permutation(len(self))
        return self.subset(np.sort(order[held:])), self.subset(np.sort(order[:held]))
