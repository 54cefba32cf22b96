"""
Checkpoint serialization

Layout (little-endian):
    magic b'FLDC' | version u32 | arch JSON length u32 | arch JSON (UTF-8)
    | per parameter until the CRC: name length u32, name, rank u32,
    dims u64 each, f64 data | CRC32 of everything before it

The arch JSON carries the training provenance under "training" when the
model has one.
"""
import json
import os
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.flows.layers import ActNorm
from src.flows.model import FlowModel, arch_label, build_model, parse_arch
from src.utils.binary_io import U32, U64, ByteReader, append_crc, split_crc, verify_crc
from src.utils.errors import ArchMismatchError, DataError, FormatError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

MAGIC = b'FLDC'
VERSION = 1
CHECKPOINT_SUFFIX = '.fldc'
PROVENANCE_KEY = 'training'


def encode_checkpoint(model: FlowModel) -> bytes:
    """Serialize a model to checkpoint bytes"""
    header = dict(model.arch)
    if model.provenance:
        header[PROVENANCE_KEY] = model.provenance
    arch_json = json.dumps(header, sort_keys=True, separators=(',', ':')).encode('utf-8')
    parts = [MAGIC, U32.pack(VERSION), U32.pack(len(arch_json)), arch_json]
    for name, value in model.params.items():
        encoded_name = name.encode('utf-8')
        parts.append(U32.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(U32.pack(value.ndim))
        parts.extend(U64.pack(dim) for dim in value.shape)
        parts.append(np.ascontiguousarray(value, dtype='<f8').tobytes())
    return append_crc(b''.join(parts))


def decode_checkpoint(data: bytes, source: str = 'checkpoint') -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Parse checkpoint bytes

    Returns:
        Tuple of (architecture descriptor, parameter arrays by name)

    Raises:
        FormatError: bad magic, unsupported version, truncation or checksum mismatch
    """
    header = ByteReader(data, source)
    header.expect_magic(MAGIC)
    header.expect_version(VERSION)

    body, stored_crc = split_crc(data, source)
    reader = ByteReader(body, source)
    reader.offset = header.offset
    arch_start = reader.offset
    arch_bytes = reader.take(reader.u32())
    try:
        arch = json.loads(arch_bytes.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{source} architecture header is not valid JSON: {e}", arch_start)

    state: Dict[str, np.ndarray] = {}
    while reader.remaining > 0:
        name_start = reader.offset
        try:
            name = reader.take(reader.u32()).decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError(f"{source} parameter name is not valid UTF-8", name_start)
        shape = tuple(reader.u64() for _ in range(reader.u32()))
        count = int(np.prod(shape)) if shape else 1
        payload = reader.take(8 * count)
        state[name] = np.frombuffer(payload, dtype='<f8').astype(np.float64).reshape(shape)
    verify_crc(body, stored_crc, source)
    return arch, state


def save_checkpoint(model: FlowModel, path: str) -> str:
    """Write a model checkpoint and return its path"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    data = encode_checkpoint(model)
    with open(path, 'wb') as f:
        f.write(data)
    logger.info(f"Saved {arch_label(model.arch)} checkpoint to {path} ({len(data)} bytes)")
    return path


def _check_expected(arch: Dict[str, Any], expected: Union[str, Dict[str, Any]], source: str) -> None:
    if isinstance(expected, dict):
        wanted = expected
    elif expected.startswith('flow2d'):
        wanted = parse_arch(expected)
    else:
        wanted = {'name': expected}
    if wanted.get('name') != arch.get('name'):
        raise ArchMismatchError(f"{source} holds a {arch_label(arch)} model, expected {wanted.get('name')}")
    for key in ('layers', 'input_shape'):
        if key in wanted and list(np.atleast_1d(wanted[key])) != list(np.atleast_1d(arch.get(key))):
            raise ArchMismatchError(f"{source} has {key}={arch.get(key)}, expected {wanted[key]}")


def load_checkpoint(path: str, expected_arch: Optional[Union[str, Dict[str, Any]]] = None) -> FlowModel:
    """
    Rebuild a model from a checkpoint file

    Args:
        path: Checkpoint path
        expected_arch: Optional architecture name or descriptor the checkpoint must match

    Returns:
        FlowModel with the stored parameters

    Raises:
        DataError: No file at path
        FormatError: Malformed file
        ArchMismatchError: Architecture or parameter layout differs
    """
    if not os.path.isfile(path):
        raise DataError(f"Checkpoint not found: {path}")
    with open(path, 'rb') as f:
        data = f.read()
    arch, state = decode_checkpoint(data, source=f"checkpoint {path}")
    if expected_arch is not None:
        _check_expected(arch, expected_arch, f"checkpoint {path}")

    provenance = arch.pop(PROVENANCE_KEY, {})
    model = build_model(arch)
    model.provenance = provenance
    stored = set(state)
    built = set(model.params.names())
    if stored != built:
        raise ArchMismatchError(
            f"checkpoint {path} parameters do not match {arch_label(arch)}: "
            f"missing {sorted(built - stored)[:5]}, unexpected {sorted(stored - built)[:5]}")
    for name, value in state.items():
        if model.params[name].shape != value.shape:
            raise ArchMismatchError(f"checkpoint {path} parameter {name} has shape {value.shape}, "
                                    f"expected {model.params[name].shape}")
    model.params.load_state_dict(state)
    for layer in model.layers:
        if isinstance(layer, ActNorm):
            layer.initialized = True
    logger.info(f"Loaded {arch_label(arch)} checkpoint from {path}")
    return model


def check_input_shape(model: FlowModel, input_shape: Tuple[int, ...], source: str = 'data') -> None:
    """Raise ArchMismatchError when data does not fit the model's input"""
    if tuple(input_shape) != model.input_shape:
        raise ArchMismatchError(f"{source} has per-sample shape {tuple(input_shape)}, "
                                f"but the model expects {model.input_shape}")
