"""
Named parameter storage with matching gradient buffers
"""
from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np

from src.numerics.tensor import Tensor
from src.utils.errors import ConfigError, ShapeError


class ParamStore:
    """Ordered mapping of parameter name to (value, gradient)"""

    def __init__(self):
        self._values: 'OrderedDict[str, Tensor]' = OrderedDict()
        self._grads: 'OrderedDict[str, Tensor]' = OrderedDict()

    def add(self, name: str, value: Tensor) -> str:
        if name in self._values:
            raise ConfigError(f"Duplicate parameter name: {name}")
        value = np.array(value, dtype=np.float64)
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return name

    def __getitem__(self, name: str) -> Tensor:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def names(self):
        return list(self._values.keys())

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._values.items())

    def grad(self, name: str) -> Tensor:
        return self._grads[name]

    def set(self, name: str, value: Tensor) -> None:
        """Overwrite a parameter in place, keeping its shape"""
        current = self._values[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != current.shape:
            raise ShapeError(f"Parameter {name} has shape {current.shape}, got {value.shape}")
        current[...] = value

    def accumulate(self, name: str, grad: Tensor) -> None:
        target = self._grads[name]
        if grad.shape != target.shape:
            raise ShapeError(f"Gradient for {name} has shape {grad.shape}, expected {target.shape}")
        target += grad

    def zero_grad(self) -> None:
        for grad in self._grads.values():
            grad.fill(0.0)

    def num_params(self) -> int:
        return int(sum(value.size for value in self._values.values()))

    def grad_norm(self) -> float:
        """Global L2 norm of all gradients, summed in name order"""
        total = 0.0
        for grad in self._grads.values():
            total += float(np.sum(grad * grad))
        return float(np.sqrt(total))

    def scale_grads(self, factor: float) -> None:
        for grad in self._grads.values():
            grad *= factor

    def state_dict(self) -> Dict[str, Tensor]:
        """Copies of all parameter values"""
        return OrderedDict((name, value.copy()) for name, value in self._values.items())

    def grads_dict(self) -> Dict[str, Tensor]:
        return OrderedDict((name, grad.copy()) for name, grad in self._grads.items())

    def load_state_dict(self, state: Dict[str, Tensor]) -> None:
        missing = [name for name in self._values if name not in state]
        unexpected = [name for name in state if name not in self._values]
        if missing or unexpected:
            raise ShapeError(f"Parameter mismatch: missing {missing}, unexpected {unexpected}")
        for name, value in state.items():
            self.set(name, value)
