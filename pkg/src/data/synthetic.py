"""
Synthetic 2D distributions
"""
import math

import numpy as np
from sklearn.datasets import make_moons

from src.numerics.rng import RngStream
from src.utils.errors import ConfigError

MAX_SEPARATION = math.sqrt(2.0)


def _check_count(n: int) -> None:
    if n < 1:
        raise ConfigError(f"Number of points must be at least 1, got {n}")


def gen_reference_gaussian(n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. standard bivariate normal points"""
    _check_count(n)
    return rng.normal((n, 2))


def check_separation(s: float) -> float:
    s = float(s)
    if not 0.0 <= s < MAX_SEPARATION:
        raise ConfigError(f"Separation must lie in [0, sqrt(2)), got {s}; "
                          f"component covariance (1 - s^2/2) I would not be positive definite")
    return s


def mixture4_means(s: float) -> np.ndarray:
    return np.array([[s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]])


def gen_mixture4(n: int, s: float, rng: RngStream) -> np.ndarray:
    """
    Equal-weight mixture of four Gaussians at (+-s, 0), (0, +-s) with
    covariance (1 - s^2/2) I, so the overall mean is 0 and covariance is I

    Component labels and base normals come from fixed substreams, so the
    same rng yields coupled samples across separations.
    """
    _check_count(n)
    s = check_separation(s)
    components = rng.split('component').integers(0, 4, n)
    base = rng.split('noise').normal((n, 2))
    return mixture4_means(s)[components] + math.sqrt(1.0 - 0.5 * s * s) * base


def gen_two_moons(n: int, noise_sd: float, rng: RngStream) -> np.ndarray:
    """Two interleaved unit semicircles plus isotropic Gaussian noise"""
    _check_count(n)
    if noise_sd < 0:
        raise ConfigError(f"noise_sd must be non-negative, got {noise_sd}")
    points, _ = make_moons(n_samples=n, noise=noise_sd, shuffle=True, random_state=rng.integer_seed())
    return points.astype(np.float64)
