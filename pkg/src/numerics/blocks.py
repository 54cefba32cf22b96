"""
Differentiable blocks with hand-derived reverse-mode gradients

Each block caches what its backward pass needs during `forward` and, in
`backward`, returns the gradient with respect to its input while adding
parameter gradients into the shared ParamStore. BLOCK_REGISTRY lists every
block together with the derivative it implements.
"""
from typing import Callable, Dict, List, Optional, Type

import numpy as np

from src.numerics.params import ParamStore
from src.numerics.rng import RngStream
from src.numerics.tensor import (
    Tensor,
    conv2d,
    conv2d_input_grad,
    conv2d_kernel_grad,
    sigmoid,
)
from src.utils.errors import ShapeError, StateError

BLOCK_REGISTRY: Dict[str, Type['Block']] = {}


def register_block(name: str) -> Callable[[Type['Block']], Type['Block']]:
    def decorator(cls: Type['Block']) -> Type['Block']:
        BLOCK_REGISTRY[name] = cls
        cls.block_name = name
        return cls
    return decorator


class Block:
    """Base class for differentiable blocks"""

    block_name = 'block'

    def __init__(self, params: ParamStore, prefix: str):
        self.params = params
        self.prefix = prefix
        self._cache = None

    def _param(self, suffix: str) -> str:
        return f"{self.prefix}.{suffix}" if self.prefix else suffix

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> Tensor:
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise StateError(f"backward called on {self.block_name} '{self.prefix}' before forward")
        return self._cache


@register_block('conv2d')
class Conv2d(Block):
    """
    y = conv(x, W) + b, stride 1, 'same' padding

    dL/dx = full correlation of dL/dy with the flipped, transposed kernel;
    dL/dW = correlation of x windows with dL/dy; dL/db = sum of dL/dy over N, H, W.
    """

    def __init__(self, params: ParamStore, prefix: str, c_in: int, c_out: int,
                 kernel_size: int, rng: RngStream, zero_init: bool = False):
        super().__init__(params, prefix)
        self.kernel_size = kernel_size
        self.padding = (kernel_size - 1) // 2
        shape = (c_out, c_in, kernel_size, kernel_size)
        if zero_init:
            weight = np.zeros(shape)
        else:
            weight = rng.normal(shape) / np.sqrt(c_in * kernel_size * kernel_size)
        self.weight = params.add(self._param('weight'), weight)
        self.bias = params.add(self._param('bias'), np.zeros(c_out))

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        out = conv2d(x, self.params[self.weight], padding=self.padding)
        return out + self.params[self.bias][None, :, None, None]

    def backward(self, grad: Tensor) -> Tensor:
        x = self._cached()
        weight = self.params[self.weight]
        self.params.accumulate(self.weight, conv2d_kernel_grad(x, grad, self.kernel_size, self.padding))
        self.params.accumulate(self.bias, grad.sum(axis=(0, 2, 3)))
        return conv2d_input_grad(grad, weight, self.padding, x.shape[2:])


@register_block('linear')
class Linear(Block):
    """
    y = x W^T + b over rows of x

    dL/dx = dL/dy W; dL/dW = (dL/dy)^T x; dL/db = column sums of dL/dy.
    """

    def __init__(self, params: ParamStore, prefix: str, d_in: int, d_out: int,
                 rng: RngStream, zero_init: bool = False):
        super().__init__(params, prefix)
        if zero_init:
            weight = np.zeros((d_out, d_in))
        else:
            weight = rng.normal((d_out, d_in)) / np.sqrt(d_in)
        self.weight = params.add(self._param('weight'), weight)
        self.bias = params.add(self._param('bias'), np.zeros(d_out))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.params[self.weight].shape[1]:
            raise ShapeError(f"Linear '{self.prefix}' expects (N, {self.params[self.weight].shape[1]}), got {x.shape}")
        self._cache = x
        return x @ self.params[self.weight].T + self.params[self.bias]

    def backward(self, grad: Tensor) -> Tensor:
        x = self._cached()
        self.params.accumulate(self.weight, grad.T @ x)
        self.params.accumulate(self.bias, grad.sum(axis=0))
        return grad @ self.params[self.weight]


@register_block('tanh')
class Tanh(Block):
    """y = tanh(x); dL/dx = dL/dy (1 - y^2)"""

    def forward(self, x: Tensor) -> Tensor:
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, grad: Tensor) -> Tensor:
        y = self._cached()
        return grad * (1.0 - y * y)


@register_block('concat_elu')
class ConcatELU(Block):
    """
    y = [elu(x), elu(-x)] along the channel axis

    dL/dx = g1 elu'(x) - g2 elu'(-x), with elu'(a) = 1 for a > 0, exp(a) otherwise.
    """

    def forward(self, x: Tensor) -> Tensor:
        self._cache = x
        return np.concatenate([_elu(x), _elu(-x)], axis=1)

    def backward(self, grad: Tensor) -> Tensor:
        x = self._cached()
        g_pos, g_neg = np.split(grad, 2, axis=1)
        return g_pos * _elu_grad(x) - g_neg * _elu_grad(-x)


def _elu(x: Tensor) -> Tensor:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(x: Tensor) -> Tensor:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


@register_block('layer_norm_channels')
class LayerNormChannels(Block):
    """
    Per-pixel normalisation over channels: y = gamma * (x - mu) / sqrt(var + eps) + beta

    With xhat the normalised input and gh = dL/dy * gamma,
    dL/dx = (gh - mean_c(gh) - xhat * mean_c(gh * xhat)) / sqrt(var + eps).
    """

    def __init__(self, params: ParamStore, prefix: str, channels: int, eps: float = 1e-5):
        super().__init__(params, prefix)
        self.eps = eps
        self.gamma = params.add(self._param('gamma'), np.ones(channels))
        self.beta = params.add(self._param('beta'), np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        mean = x.mean(axis=1, keepdims=True)
        centered = x - mean
        inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + self.eps)
        x_hat = centered * inv_std
        self._cache = (x_hat, inv_std)
        gamma = self.params[self.gamma][None, :, None, None]
        beta = self.params[self.beta][None, :, None, None]
        return gamma * x_hat + beta

    def backward(self, grad: Tensor) -> Tensor:
        x_hat, inv_std = self._cached()
        self.params.accumulate(self.gamma, (grad * x_hat).sum(axis=(0, 2, 3)))
        self.params.accumulate(self.beta, grad.sum(axis=(0, 2, 3)))
        g_hat = grad * self.params[self.gamma][None, :, None, None]
        return inv_std * (
            g_hat
            - g_hat.mean(axis=1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=1, keepdims=True)
        )


@register_block('gated_residual')
class GatedResidual(Block):
    """
    y = x + v * sigmoid(g), (v, g) = conv1x1(concat_elu(conv3x3(x)))

    dL/dv = dL/dy sigmoid(g); dL/dg = dL/dy v sigmoid(g)(1 - sigmoid(g));
    these flow back through the inner blocks and add to the identity path.
    """

    def __init__(self, params: ParamStore, prefix: str, channels: int, rng: RngStream):
        super().__init__(params, prefix)
        self.conv_in = Conv2d(params, self._param('conv_in'), channels, channels, 3, rng.split('conv_in'))
        self.act = ConcatELU(params, self._param('act'))
        self.conv_out = Conv2d(params, self._param('conv_out'), 2 * channels, 2 * channels, 1, rng.split('conv_out'))

    def forward(self, x: Tensor) -> Tensor:
        out = self.conv_out.forward(self.act.forward(self.conv_in.forward(x)))
        value, gate = np.split(out, 2, axis=1)
        gate_sig = sigmoid(gate)
        self._cache = (value, gate_sig)
        return x + value * gate_sig

    def backward(self, grad: Tensor) -> Tensor:
        value, gate_sig = self._cached()
        g_value = grad * gate_sig
        g_gate = grad * value * gate_sig * (1.0 - gate_sig)
        g_inner = self.conv_out.backward(np.concatenate([g_value, g_gate], axis=1))
        return grad + self.conv_in.backward(self.act.backward(g_inner))


@register_block('sequential')
class Sequential(Block):
    """Composition; gradients are chained in reverse order"""

    def __init__(self, params: ParamStore, prefix: str, blocks: Optional[List[Block]] = None):
        super().__init__(params, prefix)
        self.blocks: List[Block] = list(blocks or [])

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block.forward(x)
        self._cache = True
        return x

    def backward(self, grad: Tensor) -> Tensor:
        self._cached()
        for block in reversed(self.blocks):
            grad = block.backward(grad)
        return grad


def gated_conv_net(params: ParamStore, prefix: str, c_in: int, hidden: int, c_out: int,
                   rng: RngStream, num_blocks: int = 3) -> Sequential:
    """
    Coupling subnet: 3x3 conv in, `num_blocks` gated residual blocks each
    followed by channel layer norm, concat-ELU, zero-initialised 3x3 conv out
    """
    blocks: List[Block] = [Conv2d(params, f"{prefix}.conv_in", c_in, hidden, 3, rng.split('conv_in'))]
    for index in range(num_blocks):
        blocks.append(GatedResidual(params, f"{prefix}.gated{index}", hidden, rng.split('gated', index)))
        blocks.append(LayerNormChannels(params, f"{prefix}.norm{index}", hidden))
    blocks.append(ConcatELU(params, f"{prefix}.act_out"))
    blocks.append(Conv2d(params, f"{prefix}.conv_out", 2 * hidden, c_out, 3, rng.split('conv_out'), zero_init=True))
    return Sequential(params, prefix, blocks)


def mlp(params: ParamStore, prefix: str, d_in: int, hidden: int, d_out: int, rng: RngStream) -> Sequential:
    """Two hidden tanh layers with a zero-initialised output layer"""
    return Sequential(params, prefix, [
        Linear(params, f"{prefix}.fc0", d_in, hidden, rng.split('fc0')),
        Tanh(params, f"{prefix}.tanh0"),
        Linear(params, f"{prefix}.fc1", hidden, hidden, rng.split('fc1')),
        Tanh(params, f"{prefix}.tanh1"),
        Linear(params, f"{prefix}.fc2", hidden, d_out, rng.split('fc2'), zero_init=True),
    ])
