"""
Parameterised image degradations: Gaussian noise, Gaussian blur, salt-and-pepper
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from scipy.ndimage import correlate1d

from src.config import Config
from src.data.dataset import Dataset
from src.flows.dequantization import check_image_batch
from src.numerics.rng import RngStream
from src.utils.errors import ConfigError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

GAUSSIAN_NOISE = 'gaussian_noise'
GAUSSIAN_BLUR = 'gaussian_blur'
SALT_PEPPER = 'salt_pepper'


def _to_pixels(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, Config.MAX_PIXEL).astype(np.uint8)


def _check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def scaled_noise(rng: RngStream, shape, clip_sigma: float = Config.NOISE_CLIP_SIGMA) -> np.ndarray:
    """Standard normal draws clipped at +/- clip_sigma and mapped affinely onto [0, 255]"""
    z = np.clip(rng.normal(shape), -clip_sigma, clip_sigma)
    return z * (Config.MAX_PIXEL / (2.0 * clip_sigma)) + Config.MAX_PIXEL / 2.0


def gaussian_noise(images: np.ndarray, alpha: float, rng: RngStream,
                   clip_sigma: float = Config.NOISE_CLIP_SIGMA) -> np.ndarray:
    """
    Blend each image with scaled Gaussian noise: rint(clip((1 - alpha) X + alpha N, 0, 255))

    Each image draws from its own substream keyed by its index.
    """
    alpha = _check_unit_interval('Noise level alpha', alpha)
    images = check_image_batch(images)
    noise = np.stack([scaled_noise(rng.split('image', index), images.shape[1:], clip_sigma)
                      for index in range(images.shape[0])]) if images.shape[0] else np.zeros(images.shape)
    return _to_pixels((1.0 - alpha) * images.astype(np.float64) + alpha * noise)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1D Gaussian kernel truncated at ceil(3 sigma) and normalised to sum 1"""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(images: np.ndarray, radius: float) -> np.ndarray:
    """Separable Gaussian blur with sigma = radius, reflect boundaries, per channel"""
    radius = float(radius)
    if radius < 0:
        raise ConfigError(f"Blur radius must be non-negative, got {radius}")
    images = check_image_batch(images)
    if radius == 0:
        return images.astype(np.uint8, copy=True)
    kernel = gaussian_kernel(radius)
    blurred = correlate1d(images.astype(np.float64), kernel, axis=2, mode='reflect')
    blurred = correlate1d(blurred, kernel, axis=3, mode='reflect')
    return _to_pixels(blurred)


def salt_pepper(images: np.ndarray, p: float, rng: RngStream) -> np.ndarray:
    """
    One u ~ U[0, 1) per pixel location, shared across channels:
    u < p/2 -> 255, u > 1 - p/2 -> 0, otherwise unchanged
    """
    p = _check_unit_interval('Salt-and-pepper probability p', p)
    images = check_image_batch(images)
    out = images.astype(np.uint8, copy=True)
    height, width = images.shape[2:]
    for index in range(images.shape[0]):
        u = rng.split('image', index).uniform((height, width))
        out[index][:, u < p / 2.0] = Config.MAX_PIXEL
        out[index][:, u > 1.0 - p / 2.0] = 0
    return out


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    param: float
    seed: int = Config.DEFAULT_SEED

    def __post_init__(self):
        if self.kind not in DISTORTIONS:
            raise ConfigError(f"Unknown distortion kind '{self.kind}'. Valid kinds: {', '.join(DISTORTIONS)}")
        if self.kind == GAUSSIAN_BLUR:
            if self.param < 0:
                raise ConfigError(f"Blur radius must be non-negative, got {self.param}")
        else:
            _check_unit_interval(f"{self.kind} parameter", self.param)

    def apply(self, images: np.ndarray) -> np.ndarray:
        return DISTORTIONS[self.kind](images, self.param, RngStream(self.seed).split(self.kind))


DISTORTIONS: Dict[str, Callable[[np.ndarray, float, Optional[RngStream]], np.ndarray]] = {
    GAUSSIAN_NOISE: gaussian_noise,
    GAUSSIAN_BLUR: lambda images, radius, rng=None: gaussian_blur(images, radius),
    SALT_PEPPER: salt_pepper,
}


def distort_dataset(dataset: Dataset, spec: DistortionSpec) -> Dataset:
    """Apply a distortion to every image, keeping ids"""
    distorted = spec.apply(dataset.samples)
    logger.info(f"Applied {spec.kind}({spec.param}) to {len(dataset)} images "
                f"(mean abs change {mean_abs_change(dataset.samples, distorted):.3f})")
    return Dataset(dataset.ids, distorted, source=f"{dataset.source}:{spec.kind}={spec.param}")


def mean_abs_change(before: np.ndarray, after: np.ndarray) -> float:
    if before.size == 0:
        return 0.0
    return float(np.mean(np.abs(after.astype(np.int16) - before.astype(np.int16))))
