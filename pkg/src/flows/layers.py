"""
Invertible flow layers

Every layer maps x to (y, log_det) in `forward`, undoes it in `inverse`, and
in `backward` turns (dL/dy, dL/dlog_det) into dL/dx while adding parameter
gradients to the model's ParamStore. Layers work on NCHW image tensors and
on (N, D) vectors; the feature axis is always axis 1.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.flows.masks import Mask
from src.numerics.blocks import Block
from src.numerics.params import ParamStore
from src.numerics.rng import RngStream
from src.numerics.tensor import Tensor, ensure_finite, standard_normal_log_pdf, sum_per_sample
from src.utils.errors import ShapeError, StateError


@dataclass
class TransformResult:
    """Layer output and its per-sample log-determinant (nats)"""

    output: Tensor
    log_det: Tensor
    dropped: Optional[Tensor] = None


def per_sample(values: Tensor, ndim: int) -> Tensor:
    """Reshape a length-N vector to broadcast against an ndim tensor"""
    return values.reshape((-1,) + (1,) * (ndim - 1))


class FlowLayer:
    """Base class for invertible layers"""

    kind = 'layer'

    def __init__(self, name: str):
        self.name = name
        self._cache = None

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> TransformResult:
        raise NotImplementedError

    def inverse(self, y: Tensor, cond: Optional[Tensor] = None, rng: Optional[RngStream] = None,
                latent: Optional[Tensor] = None) -> Tensor:
        raise NotImplementedError

    def backward(self, grad_out: Tensor, grad_log_det: Tensor) -> Tensor:
        raise NotImplementedError

    def num_params(self) -> int:
        return 0

    def describe(self) -> str:
        return f"{self.kind} {self.name}"

    def _cached(self):
        if self._cache is None:
            raise StateError(f"backward called on {self.kind} '{self.name}' before forward")
        return self._cache


class AffineCoupling(FlowLayer):
    """
    y = mask*x + (1 - mask)*(x*exp(s) + t), (s, t) = subnet(mask*x [, cond])

    The raw scale is soft-clamped to clamp*tanh(s_raw/clamp); log_det is the
    per-sample sum of s over unmasked elements.
    """

    kind = 'coupling'

    def __init__(self, name: str, mask: Mask, subnet: Block, clamp: float, params: Optional[ParamStore] = None):
        super().__init__(name)
        self.mask = mask
        self.subnet = subnet
        self.clamp = clamp
        self.params = params

    def _scale_shift(self, x: Tensor, cond: Optional[Tensor]):
        masked = x * self.mask.values
        net_in = masked if cond is None else np.concatenate([masked, cond], axis=1)
        raw = ensure_finite(self.subnet.forward(net_in), f"subnet output of {self.name}")
        if raw.shape[1] != 2 * x.shape[1]:
            raise ShapeError(f"Subnet of {self.name} produced {raw.shape[1]} features, expected {2 * x.shape[1]}")
        s_raw, t_raw = np.split(raw, 2, axis=1)
        tanh_s = np.tanh(s_raw / self.clamp)
        inverse_mask = self.mask.inverse
        scale = self.clamp * tanh_s * inverse_mask
        shift = t_raw * inverse_mask
        return scale, shift, tanh_s

    def _check_shape(self, x: Tensor) -> None:
        mask_shape = self.mask.values.shape
        if x.ndim != len(mask_shape) or any(m != 1 and m != d for m, d in zip(mask_shape[1:], x.shape[1:])):
            raise ShapeError(f"Input {x.shape} does not match mask {mask_shape} of {self.name}")

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> TransformResult:
        self._check_shape(x)
        scale, shift, tanh_s = self._scale_shift(x, cond)
        exp_scale = np.exp(scale)
        y = ensure_finite(x * exp_scale + shift, f"output of {self.name}")
        self._cache = (x, tanh_s, exp_scale)
        return TransformResult(y, sum_per_sample(scale))

    def inverse(self, y: Tensor, cond: Optional[Tensor] = None, rng: Optional[RngStream] = None,
                latent: Optional[Tensor] = None) -> Tensor:
        self._check_shape(y)
        # masked entries of y equal those of x, so the subnet sees the same input
        scale, shift, _ = self._scale_shift(y, cond)
        return ensure_finite((y - shift) * np.exp(-scale), f"inverse of {self.name}")

    def backward(self, grad_out: Tensor, grad_log_det: Tensor) -> Tensor:
        x, tanh_s, exp_scale = self._cached()
        inverse_mask = self.mask.inverse
        grad_x = grad_out * exp_scale
        grad_scale = (grad_out * x * exp_scale + per_sample(grad_log_det, x.ndim)) * inverse_mask
        grad_s_raw = grad_scale * (1.0 - tanh_s * tanh_s)
        grad_t_raw = grad_out * inverse_mask
        grad_net_in = self.subnet.backward(np.concatenate([grad_s_raw, grad_t_raw], axis=1))
        channels = x.shape[1]
        return grad_x + grad_net_in[:, :channels] * self.mask.values

    def num_params(self) -> int:
        if self.params is None:
            return 0
        prefix = self.subnet.prefix + '.'
        return sum(value.size for name, value in self.params.items() if name.startswith(prefix))

    def describe(self) -> str:
        return f"coupling {self.name} mask={self.mask.kind}/{self.mask.parity} params={self.num_params()}"


class Squeeze(FlowLayer):
    """
    (N, C, H, W) -> (N, 4C, H/2, W/2); each 2x2 block becomes 4 channels in
    order top-left, top-right, bottom-left, bottom-right. Volume preserving.
    """

    kind = 'squeeze'

    @staticmethod
    def squeeze(x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"squeeze expects NCHW input, got shape {x.shape}")
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"squeeze needs even height and width, got {h}x{w}")
        out = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 5, 2, 4)
        return np.ascontiguousarray(out.reshape(n, 4 * c, h // 2, w // 2))

    @staticmethod
    def unsqueeze(y: Tensor) -> Tensor:
        if y.ndim != 4 or y.shape[1] % 4:
            raise ShapeError(f"unsqueeze expects NCHW input with channels divisible by 4, got {y.shape}")
        n, c, h, w = y.shape
        out = y.reshape(n, c // 4, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3)
        return np.ascontiguousarray(out.reshape(n, c // 4, 2 * h, 2 * w))

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> TransformResult:
        y = self.squeeze(x)
        self._cache = True
        return TransformResult(y, np.zeros(x.shape[0]))

    def inverse(self, y: Tensor, cond: Optional[Tensor] = None, rng: Optional[RngStream] = None,
                latent: Optional[Tensor] = None) -> Tensor:
        return self.unsqueeze(y)

    def backward(self, grad_out: Tensor, grad_log_det: Tensor) -> Tensor:
        self._cached()
        return self.unsqueeze(grad_out)


class Split(FlowLayer):
    """
    Keep the first half of the channels; score the second half under the
    standard normal prior immediately. The score is reported as log_det.
    """

    kind = 'split'

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> TransformResult:
        channels = x.shape[1]
        if channels % 2:
            raise ShapeError(f"split needs an even channel count, got {channels}")
        kept, dropped = x[:, :channels // 2], x[:, channels // 2:]
        self._cache = dropped
        return TransformResult(np.ascontiguousarray(kept), standard_normal_log_pdf(dropped),
                               dropped=np.ascontiguousarray(dropped))

    def inverse(self, y: Tensor, cond: Optional[Tensor] = None, rng: Optional[RngStream] = None,
                latent: Optional[Tensor] = None) -> Tensor:
        if latent is None:
            if rng is None:
                raise StateError(f"inverse of {self.name} needs the dropped latent or a random stream")
            latent = rng.normal(y.shape)
        if latent.shape != y.shape:
            raise ShapeError(f"Dropped latent {latent.shape} does not match kept half {y.shape}")
        return np.concatenate([y, latent], axis=1)

    def backward(self, grad_out: Tensor, grad_log_det: Tensor) -> Tensor:
        dropped = self._cached()
        grad_dropped = -dropped * per_sample(grad_log_det, dropped.ndim)
        return np.concatenate([grad_out, grad_dropped], axis=1)


class ActNorm(FlowLayer):
    """
    y = x*exp(log_scale) + bias per feature, initialised from the first batch
    so that outputs have zero mean and unit variance
    """

    kind = 'actnorm'

    def __init__(self, name: str, params: ParamStore, features: int):
        super().__init__(name)
        self.params = params
        self.log_scale = params.add(f"{name}.log_scale", np.zeros(features))
        self.bias = params.add(f"{name}.bias", np.zeros(features))
        self.initialized = False

    def _spatial(self, x: Tensor) -> int:
        return int(np.prod(x.shape[2:])) if x.ndim > 2 else 1

    def _broadcast(self, values: Tensor, ndim: int) -> Tensor:
        return values.reshape((1, -1) + (1,) * (ndim - 2))

    def initialize(self, x: Tensor) -> None:
        axes = (0,) + tuple(range(2, x.ndim))
        mean = x.mean(axis=axes)
        std = x.std(axis=axes)
        log_scale = -np.log(std + 1e-6)
        self.params.set(self.log_scale, log_scale)
        self.params.set(self.bias, -mean * np.exp(log_scale))
        self.initialized = True

    def forward(self, x: Tensor, cond: Optional[Tensor] = None) -> TransformResult:
        log_scale = self.params[self.log_scale]
        scale = np.exp(self._broadcast(log_scale, x.ndim))
        self._cache = x
        y = x * scale + self._broadcast(self.params[self.bias], x.ndim)
        log_det = np.full(x.shape[0], float(np.sum(log_scale)) * self._spatial(x))
        return TransformResult(y, log_det)

    def inverse(self, y: Tensor, cond: Optional[Tensor] = None, rng: Optional[RngStream] = None,
                latent: Optional[Tensor] = None) -> Tensor:
        scale = np.exp(self._broadcast(self.params[self.log_scale], y.ndim))
        return (y - self._broadcast(self.params[self.bias], y.ndim)) / scale

    def backward(self, grad_out: Tensor, grad_log_det: Tensor) -> Tensor:
        x = self._cached()
        scale = np.exp(self._broadcast(self.params[self.log_scale], x.ndim))
        axes = (0,) + tuple(range(2, x.ndim))
        grad_log_scale = (grad_out * x * scale).sum(axis=axes) + float(np.sum(grad_log_det)) * self._spatial(x)
        self.params.accumulate(self.log_scale, grad_log_scale)
        self.params.accumulate(self.bias, grad_out.sum(axis=axes))
        return grad_out * scale

    def num_params(self) -> int:
        return self.params[self.log_scale].size + self.params[self.bias].size
