"""
Flow models: architecture descriptors, construction, exact log-likelihood and sampling
"""
import copy
import re
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.config import Config
from src.flows.dequantization import Dequantizer, check_image_batch
from src.flows.layers import ActNorm, AffineCoupling, FlowLayer, Split, Squeeze, per_sample
from src.flows.masks import channel_mask, checkerboard_mask
from src.numerics.blocks import gated_conv_net, mlp
from src.numerics.params import ParamStore
from src.numerics.rng import RngStream
from src.numerics.tensor import Tensor, ensure_finite, standard_normal_log_pdf
from src.utils.errors import ConfigError, ShapeError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

ARCH_NAMES = ('dfld-simple', 'fld-multiscale', 'flow2d')
LATENT_ORDER = 'split latents scored when dropped, final latent scored last'

_FLOW2D_PATTERN = re.compile(r'^flow2d(?:\((\d+)\))?$')


def parse_arch(arch: Union[str, Dict[str, Any]], input_shape: Optional[Tuple[int, ...]] = None) -> Dict[str, Any]:
    """
    Normalise an architecture name or descriptor into a full descriptor

    Args:
        arch: `dfld-simple`, `fld-multiscale`, `flow2d(k)` or a descriptor dict
        input_shape: (C, H, W) for image architectures when not in the descriptor

    Returns:
        Descriptor dict with every field filled in
    """
    if isinstance(arch, str):
        match = _FLOW2D_PATTERN.match(arch.strip())
        if match:
            descriptor: Dict[str, Any] = {'name': 'flow2d', 'layers': int(match.group(1) or 4)}
        else:
            descriptor = {'name': arch.strip()}
    elif isinstance(arch, dict):
        descriptor = copy.deepcopy(arch)
    else:
        raise ConfigError(f"Architecture must be a name or a descriptor, got {type(arch).__name__}")

    name = descriptor.get('name')
    if name not in ARCH_NAMES:
        raise ConfigError(f"Unknown architecture '{name}'. Valid: dfld-simple, fld-multiscale, flow2d(k)")

    descriptor.setdefault('clamp', Config.COUPLING_CLAMP)
    if name == 'flow2d':
        descriptor.setdefault('layers', 4)
        descriptor.setdefault('hidden', Config.FLOW2D_HIDDEN)
        if int(descriptor['layers']) < 0:
            raise ConfigError(f"flow2d needs a non-negative layer count, got {descriptor['layers']}")
        descriptor['layers'] = int(descriptor['layers'])
        descriptor['input_shape'] = [2]
        return descriptor

    shape = descriptor.get('input_shape', input_shape)
    if shape is None:
        raise ConfigError(f"Architecture {name} needs an input shape (C, H, W)")
    shape = [int(v) for v in shape]
    if len(shape) != 3:
        raise ConfigError(f"Image input shape must be (C, H, W), got {shape}")
    descriptor['input_shape'] = shape
    descriptor.setdefault('variational', True)
    descriptor.setdefault('dequant_layers', 4)
    descriptor.setdefault('dequant_hidden', 16)
    descriptor.setdefault('gated_blocks', 3)
    descriptor.setdefault('alpha', Config.DEQUANT_ALPHA)
    if name == 'dfld-simple':
        descriptor.setdefault('coupling_layers', 8)
        descriptor.setdefault('hidden', 32)
    else:
        descriptor.setdefault('hidden', [32, 48, 64])
        if shape[1] % 4 or shape[2] % 4:
            raise ConfigError(f"fld-multiscale needs height and width divisible by 4, got {shape[1:]}")
    descriptor['latent_order'] = LATENT_ORDER
    return descriptor


def arch_label(descriptor: Dict[str, Any]) -> str:
    if descriptor['name'] == 'flow2d':
        return f"flow2d({descriptor['layers']})"
    return descriptor['name']


class FlowModel:
    """Ordered invertible transforms with a standard-normal prior"""

    def __init__(self, arch: Dict[str, Any], params: ParamStore, layers: List[FlowLayer],
                 dequantizer: Optional[Dequantizer], latent_shape: Tuple[int, ...]):
        self.arch = arch
        self.params = params
        self.layers = layers
        self.dequantizer = dequantizer
        self.latent_shape = tuple(latent_shape)
        # training data provenance, stored with checkpoints
        self.provenance: Dict[str, Any] = {}

    @property
    def is_image(self) -> bool:
        return self.dequantizer is not None

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.arch['input_shape'])

    @property
    def dims(self) -> int:
        return int(np.prod(self.input_shape))

    def num_params(self) -> int:
        return self.params.num_params()

    def _check_input(self, x) -> np.ndarray:
        if self.is_image:
            return check_image_batch(x, self.input_shape)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_shape[0]:
            raise ShapeError(f"Expected points of shape (N, {self.input_shape[0]}), got {x.shape}")
        return x

    def initialize(self, batch) -> None:
        """Data-dependent initialisation of ActNorm layers from one batch"""
        x = self._check_input(batch)
        if self.is_image:
            return
        for layer in self.layers:
            if isinstance(layer, ActNorm) and not layer.initialized:
                layer.initialize(x)
            x = layer.forward(x).output

    def encode(self, x: Tensor) -> Tuple[Tensor, Tensor, List[Tensor]]:
        """
        Run the continuous part of the flow

        Returns:
            Tuple of (final latent, summed log-det including split scores, dropped halves)
        """
        log_det = np.zeros(x.shape[0])
        dropped: List[Tensor] = []
        for layer in self.layers:
            result = layer.forward(x)
            x = result.output
            log_det = log_det + result.log_det
            if result.dropped is not None:
                dropped.append(result.dropped)
        return x, log_det, dropped

    def decode(self, z: Tensor, dropped: Optional[List[Tensor]] = None, rng: Optional[RngStream] = None) -> Tensor:
        """Invert `encode`; split layers take recorded halves or fresh prior draws"""
        pending = list(dropped) if dropped is not None else None
        x = z
        for index, layer in enumerate(reversed(self.layers)):
            if isinstance(layer, Split):
                latent = pending.pop() if pending else None
                x = layer.inverse(x, rng=rng.split('split', index) if rng is not None else None, latent=latent)
            else:
                x = layer.inverse(x)
        return x

    def log_prob(self, x, rng: Optional[RngStream] = None, noise: Optional[Tensor] = None) -> Tensor:
        """
        Exact per-sample log-likelihood in nats

        For image models this is the dequantization lower bound on log P(x).
        """
        x = self._check_input(x)
        if self.is_image:
            continuous, correction = self.dequantizer.forward(x, rng=rng, noise=noise)
        else:
            continuous, correction = x, 0.0
        z, log_det, _ = self.encode(continuous)
        log_likelihood = standard_normal_log_pdf(z) + log_det + correction
        return ensure_finite(log_likelihood, "log-likelihood")

    def bits_per_dim(self, log_likelihood: Tensor) -> Tensor:
        """Convert per-sample nats to bits per input dimension"""
        return -np.asarray(log_likelihood) / (self.dims * np.log(2.0))

    def loss_scale(self) -> float:
        """Divisor turning mean negative log-likelihood into the training unit"""
        return self.dims * float(np.log(2.0)) if self.is_image else 1.0

    def loss_and_grad(self, batch, rng: Optional[RngStream] = None, noise: Optional[Tensor] = None) -> float:
        """
        Mean negative log-likelihood (bits/dim for images, nats for points)
        with gradients written into the ParamStore
        """
        x = self._check_input(batch)
        self.params.zero_grad()
        if self.is_image:
            continuous, correction = self.dequantizer.forward(x, rng=rng, noise=noise)
        else:
            continuous, correction = x, 0.0
        z, log_det, _ = self.encode(continuous)
        log_likelihood = ensure_finite(standard_normal_log_pdf(z) + log_det + correction, "log-likelihood")

        count = x.shape[0]
        scale = self.loss_scale()
        weight = -1.0 / (count * scale)
        grad_log_det = np.full(count, weight)
        grad = -z * per_sample(grad_log_det, z.ndim)
        for layer in reversed(self.layers):
            grad = layer.backward(grad, grad_log_det)
        if self.is_image:
            self.dequantizer.backward(grad, grad_log_det)
        return float(-np.mean(log_likelihood) / scale)

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        """Draw n samples: prior latents pushed through the inverse flow"""
        z = rng.split('latent').normal((n,) + self.latent_shape)
        x = self.decode(z, rng=rng.split('split'))
        if self.is_image:
            return self.dequantizer.inverse(x)
        return x

    def summary(self) -> List[str]:
        lines = [f"{arch_label(self.arch)} input={list(self.input_shape)} latent={list(self.latent_shape)}"]
        if self.dequantizer is not None:
            mode = 'variational' if self.dequantizer.variational else 'uniform'
            lines.append(f"dequantization ({mode})")
            lines.extend(f"  {layer.describe()}" for layer in self.dequantizer.layers)
        lines.extend(layer.describe() for layer in self.layers)
        lines.append(f"total parameters: {self.num_params():,}")
        return lines

    def coupling_layers(self) -> List[AffineCoupling]:
        inner = list(self.dequantizer.layers) if self.dequantizer is not None else []
        return inner + [layer for layer in self.layers if isinstance(layer, AffineCoupling)]


def _image_coupling(params: ParamStore, name: str, channels: int, hidden: int, mask, clamp: float,
                    blocks: int, rng: RngStream) -> AffineCoupling:
    subnet = gated_conv_net(params, f"{name}.net", channels, hidden, 2 * channels, rng, num_blocks=blocks)
    return AffineCoupling(name, mask, subnet, clamp, params)


def build_model(arch: Union[str, Dict[str, Any]], input_shape: Optional[Tuple[int, ...]] = None,
                rng: Optional[RngStream] = None) -> FlowModel:
    """
    Construct a FlowModel from an architecture name or descriptor

    Args:
        arch: Architecture name or descriptor
        input_shape: (C, H, W) for image architectures
        rng: Stream for parameter initialisation

    Returns:
        Freshly initialised FlowModel
    """
    descriptor = parse_arch(arch, input_shape)
    rng = rng or RngStream(0)
    params = ParamStore()
    layers: List[FlowLayer] = []
    clamp = float(descriptor['clamp'])
    name = descriptor['name']

    if name == 'flow2d':
        count = descriptor['layers']
        if count > 0:
            layers.append(ActNorm('actnorm', params, 2))
        for index in range(count):
            layer_name = f"coupling{index}"
            subnet = mlp(params, f"{layer_name}.net", 2, int(descriptor['hidden']), 4, rng.split('coupling', index))
            layers.append(AffineCoupling(layer_name, channel_mask(2, parity=index % 2, spatial=False),
                                         subnet, clamp, params))
        model = FlowModel(descriptor, params, layers, None, (2,))
        logger.debug(f"Built {arch_label(descriptor)} with {model.num_params()} parameters")
        return model

    channels, height, width = descriptor['input_shape']
    blocks = int(descriptor['gated_blocks'])
    dequantizer = Dequantizer(params, (channels, height, width), bool(descriptor['variational']),
                              num_layers=int(descriptor['dequant_layers']),
                              hidden=int(descriptor['dequant_hidden']), clamp=clamp,
                              alpha=float(descriptor['alpha']), rng=rng)

    if name == 'dfld-simple':
        for index in range(int(descriptor['coupling_layers'])):
            layers.append(_image_coupling(params, f"coupling{index}", channels, int(descriptor['hidden']),
                                          checkerboard_mask(height, width, parity=index % 2), clamp, blocks,
                                          rng.split('coupling', index)))
        latent_shape = (channels, height, width)
    else:
        hidden_a, hidden_b, hidden_c = (int(h) for h in descriptor['hidden'])
        index = 0
        for parity in range(2):
            layers.append(_image_coupling(params, f"coupling{index}", channels, hidden_a,
                                          checkerboard_mask(height, width, parity=parity), clamp, blocks,
                                          rng.split('coupling', index)))
            index += 1
        layers.append(Squeeze('squeeze0'))
        channels, height, width = 4 * channels, height // 2, width // 2
        for parity in range(2):
            layers.append(_image_coupling(params, f"coupling{index}", channels, hidden_b,
                                          channel_mask(channels, parity=parity), clamp, blocks,
                                          rng.split('coupling', index)))
            index += 1
        layers.append(Squeeze('squeeze1'))
        layers.append(Split('split0'))
        channels, height, width = 4 * channels // 2, height // 2, width // 2
        for parity in range(4):
            layers.append(_image_coupling(params, f"coupling{index}", channels, hidden_c,
                                          channel_mask(channels, parity=parity % 2), clamp, blocks,
                                          rng.split('coupling', index)))
            index += 1
        latent_shape = (channels, height, width)

    model = FlowModel(descriptor, params, layers, dequantizer, latent_shape)
    logger.debug(f"Built {arch_label(descriptor)} with {model.num_params()} parameters")
    return model
