"""
Raw tensor files

Layout (little-endian):
    magic b'TNSR' | version u32 | dtype u8 (0 = f64, 1 = u8) | rank u32
    | dims u64 each | row-major payload | CRC32 of everything before it
"""
import os

import numpy as np

from src.utils.binary_io import U8, U32, U64, ByteReader, append_crc, split_crc, verify_crc
from src.utils.errors import FormatError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

MAGIC = b'TNSR'
VERSION = 1
DTYPE_CODES = {0: np.dtype('<f8'), 1: np.dtype('u1')}
TENSOR_SUFFIX = '.tnsr'


def _dtype_code(dtype: np.dtype) -> int:
    for code, known in DTYPE_CODES.items():
        if np.dtype(dtype) == known:
            return code
    raise FormatError(f"Unsupported tensor dtype {dtype}; only float64 and uint8 are stored")


def encode_tensor(tensor: np.ndarray) -> bytes:
    tensor = np.asarray(tensor)
    code = _dtype_code(tensor.dtype)
    header = [MAGIC, U32.pack(VERSION), U8.pack(code), U32.pack(tensor.ndim)]
    header.extend(U64.pack(dim) for dim in tensor.shape)
    payload = np.ascontiguousarray(tensor, dtype=DTYPE_CODES[code]).tobytes()
    return append_crc(b''.join(header) + payload)


def decode_tensor(data: bytes, source: str = 'tensor file') -> np.ndarray:
    """
    Parse raw tensor bytes

    Raises:
        FormatError: bad magic, version or dtype, truncated payload or checksum mismatch
    """
    reader = ByteReader(data, source)
    reader.expect_magic(MAGIC)
    reader.expect_version(VERSION)
    code_offset = reader.offset
    code = reader.u8()
    if code not in DTYPE_CODES:
        raise FormatError(f"{source} has unknown dtype code {code}", code_offset)
    dtype = DTYPE_CODES[code]
    shape = tuple(reader.u64() for _ in range(reader.u32()))

    expected = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
    actual = reader.remaining - U32.size
    if actual != expected:
        raise FormatError(f"{source} payload size mismatch: expected {expected} bytes, found {max(actual, 0)}",
                          reader.offset)
    body, stored_crc = split_crc(data, source)
    verify_crc(body, stored_crc, source)
    payload = reader.take(expected)
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_tensor(path: str, tensor: np.ndarray) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    data = encode_tensor(tensor)
    with open(path, 'wb') as f:
        f.write(data)
    logger.debug(f"Wrote tensor {np.shape(tensor)} to {path}")
    return path


def read_tensor(path: str) -> np.ndarray:
    with open(path, 'rb') as f:
        data = f.read()
    return decode_tensor(data, source=f"tensor file {path}")
