"""
Dequantization of 8-bit images

Pixels x in {0..255} become continuous values (x + u) / 256 in [0, 1].
Uniform mode draws u ~ U[0, 1). Variational mode pushes uniform noise through
logit, a stack of image-conditioned couplings and a sigmoid, so u has an exact
density q(u|x). The returned log-correction is -log q(u|x) - D*log(256); added
to the continuous log-density it gives a lower bound on log P(x).
"""
from typing import List, Optional, Tuple

import numpy as np

from src.flows.layers import AffineCoupling, per_sample
from src.flows.masks import checkerboard_mask
from src.numerics.blocks import gated_conv_net
from src.numerics.params import ParamStore
from src.numerics.rng import RngStream
from src.numerics.tensor import Tensor, sigmoid, softplus, sum_per_sample
from src.utils.errors import DataError, NumericsError, ShapeError, StateError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

LOG_256 = float(np.log(256.0))


def check_image_batch(images: np.ndarray, expected_shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    """Validate an N x C x H x W batch of integer pixels in [0, 255]"""
    images = np.asarray(images)
    if images.ndim != 4:
        raise ShapeError(f"Image batch must be NCHW, got shape {images.shape}")
    if expected_shape is not None and tuple(images.shape[1:]) != tuple(expected_shape):
        raise ShapeError(f"Image batch has per-image shape {images.shape[1:]}, expected {tuple(expected_shape)}")
    if images.size and (images.min() < 0 or images.max() > 255):
        raise DataError(f"Pixel values must lie in [0, 255], got [{images.min()}, {images.max()}]")
    if images.dtype != np.uint8 and not np.all(np.equal(np.mod(images, 1), 0)):
        raise DataError("Pixel values must be integers")
    return images


class Dequantizer:
    """Uniform or variational dequantization stage of an image flow"""

    def __init__(self, params: ParamStore, input_shape: Tuple[int, int, int], variational: bool,
                 num_layers: int = 4, hidden: int = 16, clamp: float = 2.0, alpha: float = 1e-5,
                 rng: Optional[RngStream] = None):
        self.input_shape = tuple(input_shape)
        self.variational = variational
        self.alpha = alpha
        self.layers: List[AffineCoupling] = []
        self._cache = None
        if variational:
            channels, height, width = self.input_shape
            rng = rng or RngStream(0)
            for index in range(num_layers):
                name = f"dequant.coupling{index}"
                subnet = gated_conv_net(params, f"{name}.net", 2 * channels, hidden, 2 * channels,
                                        rng.split('dequant', index))
                self.layers.append(AffineCoupling(name, checkerboard_mask(height, width, parity=index % 2),
                                                  subnet, clamp, params))

    @property
    def dims(self) -> int:
        return int(np.prod(self.input_shape))

    def forward(self, images: np.ndarray, rng: Optional[RngStream] = None,
                noise: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        """
        Dequantize a batch

        Args:
            images: Integer pixels, shape (N, C, H, W)
            rng: Stream for the uniform base noise
            noise: Explicit base noise in [0, 1) (overrides rng)

        Returns:
            Tuple of (continuous tensor in [0, 1], log-correction per sample)
        """
        images = check_image_batch(images, self.input_shape)
        x = images.astype(np.float64)
        if noise is None:
            if rng is None:
                raise StateError("Dequantization needs a random stream or explicit noise")
            noise = rng.uniform(x.shape)
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != x.shape:
            raise ShapeError(f"Dequantization noise {noise.shape} does not match images {x.shape}")

        if not self.variational:
            self._cache = None
            return (x + noise) / 256.0, np.full(x.shape[0], -self.dims * LOG_256)

        squeezed = noise * (1.0 - self.alpha) + 0.5 * self.alpha
        log_det = np.full(x.shape[0], self.dims * float(np.log(1.0 - self.alpha)))
        log_det += sum_per_sample(-np.log(squeezed) - np.log1p(-squeezed))
        v = np.log(squeezed) - np.log1p(-squeezed)

        cond = x / 255.0 * 2.0 - 1.0
        for layer in self.layers:
            result = layer.forward(v, cond)
            v = result.output
            log_det += result.log_det

        u = sigmoid(v)
        log_det += sum_per_sample(-v - 2.0 * softplus(-v))
        if np.any(u < 0.0) or np.any(u >= 1.0) or not np.all(np.isfinite(log_det)):
            raise NumericsError("Variational dequantization produced noise outside [0, 1)")
        self._cache = u
        return (x + u) / 256.0, log_det - self.dims * LOG_256

    def backward(self, grad_continuous: Tensor, grad_log_det: Tensor) -> None:
        """Accumulate parameter gradients; the base noise carries no parameters"""
        if not self.variational:
            return
        if self._cache is None:
            raise StateError("Dequantizer backward called before forward")
        u = self._cache
        grad_u = grad_continuous / 256.0
        grad_v = grad_u * u * (1.0 - u) + per_sample(grad_log_det, u.ndim) * (1.0 - 2.0 * u)
        for layer in reversed(self.layers):
            grad_v = layer.backward(grad_v, grad_log_det)

    def inverse(self, continuous: Tensor) -> np.ndarray:
        """Map continuous values back to pixels by flooring"""
        return np.clip(np.floor(continuous * 256.0), 0, 255).astype(np.uint8)
