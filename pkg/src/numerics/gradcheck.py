"""
Central finite-difference gradient oracle
"""
from collections import OrderedDict
from typing import Callable, Dict, Iterable, Optional

import numpy as np

from src.numerics.params import ParamStore
from src.numerics.tensor import Tensor
from src.utils.errors import ConfigError, NumericsError


def finite_diff_grad(scalar_fn: Callable[[], float], params: ParamStore, h: float = 1e-4,
                     names: Optional[Iterable[str]] = None) -> Dict[str, Tensor]:
    """
    Estimate d scalar_fn / d param with central differences

    Args:
        scalar_fn: Deterministic function of the current parameter values
        params: Parameters to perturb in place (restored afterwards)
        h: Step size, must be positive
        names: Restrict the estimate to these parameters

    Returns:
        Mapping of parameter name to gradient estimate
    """
    if h <= 0:
        raise ConfigError(f"Finite-difference step must be positive, got {h}")
    grads: Dict[str, Tensor] = OrderedDict()
    for name in (names if names is not None else params.names()):
        value = params[name]
        grad = np.zeros_like(value)
        flat_value = value.reshape(-1)
        flat_grad = grad.reshape(-1)
        for index in range(flat_value.size):
            original = flat_value[index]
            flat_value[index] = original + h
            f_plus = scalar_fn()
            flat_value[index] = original - h
            f_minus = scalar_fn()
            flat_value[index] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericsError(f"Non-finite function value while perturbing {name}[{index}]")
            flat_grad[index] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = grad
    return grads


def finite_diff_input_grad(scalar_fn: Callable[[Tensor], float], x: Tensor, h: float = 1e-4) -> Tensor:
    """Central-difference gradient of scalar_fn with respect to the entries of x"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for index in range(flat_x.size):
        original = flat_x[index]
        flat_x[index] = original + h
        f_plus = scalar_fn(x)
        flat_x[index] = original - h
        f_minus = scalar_fn(x)
        flat_x[index] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericsError(f"Non-finite function value at input index {index}")
        flat_grad[index] = (f_plus - f_minus) / (2.0 * h)
    return grad


def numeric_jacobian(fn: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> Tensor:
    """Central-difference Jacobian of a vector map R^d -> R^d at a single point"""
    x = np.array(x, dtype=np.float64).reshape(-1)
    columns = []
    for index in range(x.size):
        step = np.zeros_like(x)
        step[index] = h
        columns.append((np.asarray(fn(x + step)).reshape(-1) - np.asarray(fn(x - step)).reshape(-1)) / (2.0 * h))
    return np.stack(columns, axis=1)


def relative_error(a: Tensor, b: Tensor, floor: float = 1e-8) -> float:
    """max |a - b| divided by the largest magnitude in a or b (at least `floor`)"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b))) / scale
