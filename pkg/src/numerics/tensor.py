"""
Tensor helpers

Tensors are float64 numpy arrays in row-major layout. Image tensors use NCHW,
convolution kernels use OIKK.
"""
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.utils.errors import NumericsError, ShapeError

Tensor = np.ndarray

LOG_2PI = float(np.log(2.0 * np.pi))


def as_tensor(values) -> Tensor:
    """Convert to a contiguous float64 array"""
    return np.ascontiguousarray(values, dtype=np.float64)


def ensure_finite(tensor: Tensor, what: str) -> Tensor:
    """Raise NumericsError if `tensor` holds NaN or Inf"""
    if not np.all(np.isfinite(tensor)):
        bad = int(np.size(tensor) - np.count_nonzero(np.isfinite(tensor)))
        raise NumericsError(f"{what} contains {bad} non-finite value(s)")
    return tensor


def sum_per_sample(tensor: Tensor) -> Tensor:
    """Sum every axis except the leading batch axis"""
    return tensor.reshape(tensor.shape[0], -1).sum(axis=1)


def standard_normal_log_pdf(z: Tensor) -> Tensor:
    """Per-sample log density of z under an isotropic standard normal"""
    flat = z.reshape(z.shape[0], -1)
    return -0.5 * (flat.shape[1] * LOG_2PI + np.sum(flat * flat, axis=1))


def _check_conv_shapes(x: Tensor, kernel: Tensor) -> Tuple[int, int]:
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and OIKK kernel, got {x.shape} and {kernel.shape}")
    k_h, k_w = kernel.shape[2], kernel.shape[3]
    if k_h != k_w or k_h % 2 == 0:
        raise ShapeError(f"Kernel spatial size must be square and odd, got {k_h}x{k_w}")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"Input has {x.shape[1]} channels but kernel expects {kernel.shape[1]}")
    return k_h, x.shape[1]


def conv2d(x: Tensor, kernel: Tensor, padding: int = 0) -> Tensor:
    """
    Stride-1 cross-correlation with zero padding

    Args:
        x: Input of shape (N, C, H, W)
        kernel: Weights of shape (O, C, K, K), K odd
        padding: Zero padding on every spatial border

    Returns:
        Output of shape (N, O, H + 2p - K + 1, W + 2p - K + 1)
    """
    k, _ = _check_conv_shapes(x, kernel)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeError(f"Padded input {x.shape[2:]} smaller than kernel {k}x{k}")
    if k == 1:
        out = np.tensordot(x, kernel[:, :, 0, 0], axes=([1], [1]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    windows = sliding_window_view(x, (k, k), axis=(2, 3))
    out = np.tensordot(windows, kernel, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_input_grad(grad_out: Tensor, kernel: Tensor, padding: int, input_hw: Tuple[int, int]) -> Tensor:
    """Gradient of conv2d with respect to its input"""
    k = kernel.shape[2]
    flipped = np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_padded = conv2d(grad_out, flipped, padding=k - 1)
    h, w = input_hw
    return np.ascontiguousarray(grad_padded[:, :, padding:padding + h, padding:padding + w])


def conv2d_kernel_grad(x: Tensor, grad_out: Tensor, kernel_size: int, padding: int) -> Tensor:
    """Gradient of conv2d with respect to its kernel"""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if kernel_size == 1:
        grad = np.tensordot(grad_out, x, axes=([0, 2, 3], [0, 2, 3]))
        return grad[:, :, None, None]
    windows = sliding_window_view(x, (kernel_size, kernel_size), axis=(2, 3))
    return np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic function"""
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def softplus(x: Tensor) -> Tensor:
    return np.logaddexp(0.0, x)
