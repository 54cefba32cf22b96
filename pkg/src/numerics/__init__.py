from src.numerics.params import ParamStore
from src.numerics.rng import RngStream
from src.numerics.tensor import Tensor, conv2d

__all__ = ['ParamStore', 'RngStream', 'Tensor', 'conv2d']
