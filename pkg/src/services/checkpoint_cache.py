"""
Local checkpoint cache keyed by configuration hash
"""
import hashlib
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from src.config import Config
from src.data.dataset import Dataset
from src.flows.checkpoint import CHECKPOINT_SUFFIX, load_checkpoint, save_checkpoint
from src.flows.model import FlowModel
from src.utils.errors import ArchMismatchError, FormatError
from src.utils.logging_config import get_logger
from src.utils.reports import config_hash

logger = get_logger(__name__)


def dataset_fingerprint(dataset: Dataset) -> str:
    """Hash of sample ids and contents"""
    digest = hashlib.sha256()
    for sample_id in dataset.ids:
        digest.update(sample_id.encode('utf-8'))
        digest.update(b'\0')
    digest.update(str(dataset.samples.dtype).encode('ascii'))
    digest.update(repr(dataset.samples.shape).encode('ascii'))
    digest.update(dataset.samples.tobytes())
    return digest.hexdigest()[:16]


class CheckpointCache:
    """Checkpoint files under a cache directory, one per training configuration"""

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = cache_dir or Config.CACHE_DIR
        if not os.path.exists(self.cache_dir):
            os.makedirs(self.cache_dir)
            logger.info(f"Created checkpoint cache directory: {self.cache_dir}")

    @staticmethod
    def key(arch: Dict[str, Any], train: Dict[str, Any], data: str, role: str = 'flow') -> str:
        """Cache key from architecture descriptor, training config and data fingerprint"""
        return f"{role}-{config_hash({'arch': arch, 'train': train, 'data': data})}"

    def path_for(self, key: str) -> str:
        return os.path.join(self.cache_dir, f"{key}{CHECKPOINT_SUFFIX}")

    def get(self, key: str) -> Optional[FlowModel]:
        """Load a cached model, or None on a miss or an unreadable entry"""
        path = self.path_for(key)
        if not os.path.exists(path):
            logger.debug(f"Cache miss: {key}")
            return None
        try:
            model = load_checkpoint(path)
        except (FormatError, ArchMismatchError) as e:
            logger.warning(f"Ignoring unreadable cache entry {path}: {e}")
            return None
        logger.info(f"Cache hit: {key}")
        return model

    def put(self, key: str, model: FlowModel) -> str:
        return save_checkpoint(model, self.path_for(key))

    def list_checkpoints(self) -> List[Dict[str, Any]]:
        """List cached checkpoints with size and timestamps"""
        files = []
        if not os.path.exists(self.cache_dir):
            return files
        for filename in sorted(os.listdir(self.cache_dir)):
            if not filename.endswith(CHECKPOINT_SUFFIX):
                continue
            stat = os.stat(os.path.join(self.cache_dir, filename))
            files.append({
                'filename': filename,
                'size': stat.st_size,
                'created': datetime.fromtimestamp(stat.st_ctime).isoformat(),
                'updated': datetime.fromtimestamp(stat.st_mtime).isoformat(),
            })
        logger.info(f"Listed {len(files)} cached checkpoints in {self.cache_dir}")
        return files
