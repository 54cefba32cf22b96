"""
Datasets, file formats and synthetic generators
"""
from src.data.dataset import Dataset
from src.data.image_io import load_dataset, load_image_dir, save_dataset
from src.data.tensor_io import read_tensor, write_tensor

__all__ = ['Dataset', 'load_dataset', 'load_image_dir', 'save_dataset', 'read_tensor', 'write_tensor']
