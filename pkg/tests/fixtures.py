"""
Small models and datasets shared by the test modules
"""
import numpy as np

from src.data.dataset import Dataset
from src.flows.model import FlowModel, build_model
from src.numerics.params import ParamStore
from src.numerics.rng import RngStream

TINY_SIMPLE = {
    'name': 'dfld-simple', 'input_shape': [1, 4, 4], 'coupling_layers': 2, 'hidden': 4,
    'dequant_layers': 1, 'dequant_hidden': 4, 'gated_blocks': 1,
}

TINY_MULTISCALE = {
    'name': 'fld-multiscale', 'input_shape': [1, 4, 4], 'hidden': [4, 4, 4],
    'dequant_layers': 1, 'dequant_hidden': 4, 'gated_blocks': 1,
}


def randomize(params: ParamStore, seed: int = 0, scale: float = 0.3) -> None:
    """Overwrite every parameter with small random values so no layer is the identity"""
    rng = RngStream(seed).split('randomize')
    for index, name in enumerate(params.names()):
        value = params[name]
        params.set(name, rng.split(index).normal(value.shape) * scale)


def random_model(arch, seed: int = 0, scale: float = 0.3) -> FlowModel:
    model = build_model(arch, rng=RngStream(seed))
    randomize(model.params, seed, scale)
    return model


def random_images(n: int, shape=(1, 4, 4), seed: int = 0) -> np.ndarray:
    return RngStream(seed).split('images').integers(0, 256, (n,) + tuple(shape)).astype(np.uint8)


def point_dataset(n: int, seed: int = 0, prefix: str = '') -> Dataset:
    return Dataset.from_array(RngStream(seed).split('points').normal((n, 2)), source='points', prefix=prefix)


def image_dataset(n: int, shape=(1, 4, 4), seed: int = 0) -> Dataset:
    return Dataset.from_array(random_images(n, shape, seed), source='images')


def rectangle_images(n: int, size: int = 16, seed: int = 0) -> np.ndarray:
    """Single-channel images of one bright rectangle on a dark background"""
    rng = RngStream(seed).split('rectangles')
    images = np.full((n, 1, size, size), 32, dtype=np.uint8)
    corners = rng.split('corners').integers(0, size - 2, (n, 2))
    extents = rng.split('extents').integers(3, size // 2 + 1, (n, 2))
    for index in range(n):
        (top, left), (height, width) = corners[index], extents[index]
        images[index, 0, top:top + height, left:left + width] = 224
    return images
