"""
PNG directory ingestion and export with Pillow
"""
import os
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image

from src.data.dataset import Dataset
from src.data.tensor_io import TENSOR_SUFFIX, read_tensor, write_tensor
from src.utils.errors import DataError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

PNG_SUFFIX = '.png'

Resolution = Union[int, Tuple[int, int], None]


def _as_hw(resolution: Resolution) -> Optional[Tuple[int, int]]:
    if resolution is None:
        return None
    if isinstance(resolution, int):
        return resolution, resolution
    height, width = resolution
    return int(height), int(width)


def _decode_png(path: str, size: Optional[Tuple[int, int]], resize: bool) -> Tuple[np.ndarray, Tuple[int, int]]:
    with Image.open(path) as image:
        rgb = image.convert('RGB')
    original = (rgb.height, rgb.width)
    if size is not None and original != size and resize:
        rgb = rgb.resize((size[1], size[0]), Image.Resampling.BILINEAR)
    return np.asarray(rgb, dtype=np.uint8).transpose(2, 0, 1), original


def load_image_dir(path: str, expected_resolution: Resolution = None, resize: bool = False) -> Dataset:
    """
    Load every PNG in a directory as a C=3 NCHW uint8 Dataset

    Args:
        path: Directory holding .png files
        expected_resolution: Side length or (H, W); defaults to the first file's size
        resize: Resize mismatched files instead of rejecting them

    Returns:
        Dataset with ids = sorted filenames

    Raises:
        DataError: Missing or empty directory, or size mismatches without resize
    """
    if not os.path.isdir(path):
        logger.error(f"Image directory not found: {path}")
        raise DataError(f"Image directory not found: {path}")
    filenames = sorted(name for name in os.listdir(path) if name.lower().endswith(PNG_SUFFIX))
    if not filenames:
        raise DataError(f"No PNG files in {path}")

    size = _as_hw(expected_resolution)
    images: List[np.ndarray] = []
    offenders: List[str] = []
    for filename in filenames:
        try:
            pixels, original = _decode_png(os.path.join(path, filename), size, resize)
        except OSError as e:
            raise DataError(f"Cannot decode {os.path.join(path, filename)}: {e}")
        if size is None:
            size = original
        if pixels.shape[1:] != size:
            offenders.append(f"{filename} ({original[0]}x{original[1]})")
            continue
        images.append(pixels)

    if offenders:
        listed = ', '.join(offenders[:10]) + (' ...' if len(offenders) > 10 else '')
        logger.error(f"{len(offenders)} image(s) in {path} are not {size[0]}x{size[1]}")
        raise DataError(f"Expected {size[0]}x{size[1]} images in {path}; mismatched: {listed} "
                        f"(pass --resize to rescale)")

    logger.info(f"Loaded {len(images)} images of size {size[0]}x{size[1]} from {path}")
    return Dataset(filenames, np.stack(images), source=path)


def write_image_dir(dataset: Dataset, path: str) -> List[str]:
    """Write an image Dataset as PNG files named by sample id"""
    os.makedirs(path, exist_ok=True)
    written = []
    for sample_id, pixels in zip(dataset.ids, dataset.samples):
        filename = sample_id if sample_id.lower().endswith(PNG_SUFFIX) else f"{sample_id}{PNG_SUFFIX}"
        target = os.path.join(path, filename)
        Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0))).save(target, format='PNG')
        written.append(target)
    logger.info(f"Wrote {len(written)} PNG files to {path}")
    return written


def load_dataset(path: str, expected_resolution: Resolution = None, resize: bool = False) -> Dataset:
    """
    Load an image directory or a raw tensor file

    Tensor files hold uint8 (N, C, H, W) images or float64 (N, 2) points.
    """
    if os.path.isdir(path):
        return load_image_dir(path, expected_resolution, resize)
    if not os.path.isfile(path):
        logger.error(f"Data path not found: {path}")
        raise DataError(f"Data path not found: {path}")
    tensor = read_tensor(path)
    if tensor.ndim == 4 and tensor.dtype == np.uint8:
        dataset = Dataset.from_array(tensor, source=path)
        size = _as_hw(expected_resolution)
        if size is not None and dataset.sample_shape[1:] != size:
            raise DataError(f"{path} holds {dataset.sample_shape[1]}x{dataset.sample_shape[2]} images, "
                            f"expected {size[0]}x{size[1]}")
    elif tensor.ndim == 2 and tensor.dtype == np.float64:
        dataset = Dataset.from_array(tensor, source=path)
    else:
        raise DataError(f"{path} holds a {tensor.dtype} tensor of shape {tensor.shape}; "
                        f"expected uint8 NCHW images or float64 (N, 2) points")
    if len(dataset) == 0:
        raise DataError(f"{path} holds no samples")
    logger.info(f"Loaded {len(dataset)} samples of shape {dataset.sample_shape} from {path}")
    return dataset


def save_dataset(dataset: Dataset, path: str) -> str:
    """Write to a tensor file when path ends in .tnsr or the data are points, else a PNG directory"""
    if path.endswith(TENSOR_SUFFIX) or dataset.kind != 'image':
        write_tensor(path, dataset.samples)
    else:
        write_image_dir(dataset, path)
    return path
