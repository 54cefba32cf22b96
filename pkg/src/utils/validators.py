"""
Input validation utilities for flowlhd run configurations and CLI arguments
"""
import os
from typing import Any, Dict, List, Optional, Tuple

from src.config import Config

TRAIN_KEYS = {'epochs': int, 'batch_size': int, 'learning_rate': float, 'beta1': float, 'beta2': float,
              'eps': float, 'clip_norm': float, 'seed': int, 'checkpoint_every': int,
              'validation_fraction': float}
DATA_KEYS = {'real': str, 'gen': str, 'out': str, 'resolution': int, 'resize': bool}
METRIC_KEYS = {'batch_size': int, 'seed': int, 'workers': int}
EXPERIMENT_KEYS = {'separations': list, 'n': int, 'sizes': list, 'runs': int, 'kind': str, 'grid': list,
                   'metric': str, 'already_held_out': bool, 'arch': str}
SECTIONS = {'train': TRAIN_KEYS, 'data': DATA_KEYS, 'metric': METRIC_KEYS, 'experiment': EXPERIMENT_KEYS}
TOP_LEVEL_KEYS = set(SECTIONS) | {'arch', 'seed'}
PATH_KEYS = ('real', 'gen', 'out')


def parse_float_list(text: str) -> Optional[List[float]]:
    """
    Parse a comma-separated list of numbers

    Args:
        text: e.g. "0, 0.4, 0.7"

    Returns:
        List of floats or None if invalid
    """
    try:
        values = [float(item) for item in str(text).split(',') if item.strip()]
    except ValueError:
        return None
    return values or None


def parse_int_list(text: str) -> Optional[List[int]]:
    values = parse_float_list(text)
    if values is None or any(v != int(v) for v in values):
        return None
    return [int(v) for v in values]


def validate_separations(values: List[float]) -> Tuple[bool, Optional[str]]:
    """
    Validate mixture separations

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not values:
        return False, "At least one separation is required"
    for value in values:
        if not 0.0 <= value < Config.MAX_SEPARATION:
            return False, f"Separation {value} must be in [0, {Config.MAX_SEPARATION:.6f})"
    return True, None


def validate_distortion(kind: str, param: float) -> Tuple[bool, Optional[str]]:
    """
    Validate a distortion kind and parameter

    Returns:
        Tuple of (is_valid, error_message)
    """
    if kind not in Config.DISTORTION_KINDS:
        return False, f"Unknown distortion kind '{kind}'. Valid kinds: {', '.join(Config.DISTORTION_KINDS)}"
    if kind == 'gaussian_blur':
        if param < 0:
            return False, f"Blur radius must be non-negative, got {param}"
    elif not 0.0 <= param <= 1.0:
        return False, f"{kind} parameter must be between 0 and 1, got {param}"
    return True, None


def validate_sample_sizes(sizes: List[int], runs: int) -> Tuple[bool, Optional[str]]:
    if not sizes:
        return False, "At least one sample size is required"
    if any(n < 1 for n in sizes):
        return False, "Sample sizes must be positive"
    if runs < 1:
        return False, "runs must be at least 1"
    return True, None


def _coerce(value: Any, kind: type) -> Any:
    if kind is bool:
        if not isinstance(value, bool):
            raise ValueError("expected true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or float(value) != int(float(value)):
            raise ValueError("expected an integer")
        return int(float(value))
    if kind is float:
        if isinstance(value, bool):
            raise ValueError("expected a number")
        return float(value)
    if kind is list:
        if not isinstance(value, list):
            raise ValueError("expected a list")
        return [float(v) for v in value]
    if not isinstance(value, str):
        raise ValueError("expected a string")
    return value


def validate_run_config(data: Optional[dict], base_dir: Optional[str] = None) -> Tuple[bool, Optional[str], Optional[dict]]:
    """
    Validate a RunConfig JSON document

    Args:
        data: Parsed JSON document
        base_dir: Directory relative paths are resolved against (defaults to the working directory)

    Returns:
        Tuple of (is_valid, error_message, normalized_data)
    """
    if data is None:
        return True, None, {}
    if not isinstance(data, dict):
        return False, "Run configuration must be a JSON object", None

    unknown = sorted(set(data) - TOP_LEVEL_KEYS)
    if unknown:
        return False, f"Unknown configuration key(s): {', '.join(unknown)}", None

    normalized: Dict[str, Any] = {}
    if 'arch' in data:
        if not isinstance(data['arch'], (str, dict)):
            return False, "arch must be an architecture name or descriptor object", None
        normalized['arch'] = data['arch']
    if 'seed' in data:
        try:
            normalized['seed'] = _coerce(data['seed'], int)
        except (TypeError, ValueError) as e:
            return False, f"seed: {e}", None
        if normalized['seed'] < 0:
            return False, "seed must be non-negative", None

    for section, schema in SECTIONS.items():
        if section not in data:
            continue
        values = data[section]
        if not isinstance(values, dict):
            return False, f"Section '{section}' must be a JSON object", None
        unknown = sorted(set(values) - set(schema))
        if unknown:
            return False, f"Unknown key(s) in '{section}': {', '.join(unknown)}", None
        cleaned = {}
        for key, value in values.items():
            try:
                cleaned[key] = _coerce(value, schema[key])
            except (TypeError, ValueError) as e:
                return False, f"{section}.{key}: {e}", None
        normalized[section] = cleaned

    data_section = normalized.get('data', {})
    for key in PATH_KEYS:
        if key in data_section:
            data_section[key] = os.path.abspath(os.path.join(base_dir or os.getcwd(), data_section[key]))

    experiment = normalized.get('experiment', {})
    if 'separations' in experiment:
        is_valid, error = validate_separations(experiment['separations'])
        if not is_valid:
            return False, error, None
    if 'kind' in experiment:
        for level in experiment.get('grid') or [0.0]:
            is_valid, error = validate_distortion(experiment['kind'], level)
            if not is_valid:
                return False, error, None

    return True, None, normalized
