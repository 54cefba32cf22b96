"""
CSV and JSON report writers
"""
import hashlib
import json
import os
from typing import Any, Dict, Optional

import pandas as pd

from src.utils.logging_config import get_logger

logger = get_logger(__name__)

FOOTER_PREFIX = '# '


def config_hash(document: Dict[str, Any]) -> str:
    """Short stable hash of a JSON-serialisable configuration"""
    canonical = json.dumps(document, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def write_csv(frame: pd.DataFrame, path: str, cfg_hash: Optional[str] = None, seed: Optional[int] = None) -> str:
    """
    Write a report with a header row and a trailing comment line
    recording the configuration hash and seed
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    body = frame.to_csv(index=False, lineterminator='\n', float_format='%.10g')
    footer = f"{FOOTER_PREFIX}config_hash={cfg_hash or 'none'} seed={seed if seed is not None else 'none'}\n"
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(body)
        f.write(footer)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    """Read a report written by write_csv, ignoring the footer"""
    return pd.read_csv(path, comment='#')


def read_footer(path: str) -> Dict[str, str]:
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line.strip() for line in f if line.startswith(FOOTER_PREFIX)]
    if not lines:
        return {}
    return dict(item.split('=', 1) for item in lines[-1][len(FOOTER_PREFIX):].split())


def to_json(document: Dict[str, Any]) -> str:
    return json.dumps(document, indent=2, sort_keys=False)
