"""
Configuration management for flowlhd
"""
import os
import tempfile


class Config:
    """Base configuration class"""

    # Checkpoint cache
    CACHE_DIR: str = os.environ.get('FLOWLHD_CACHE_DIR', '.flowlhd_cache')

    # Logging
    LOG_LEVEL: str = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FORMAT: str = os.environ.get('LOG_FORMAT', 'standard')
    SHOW_PROGRESS: bool = os.environ.get('FLOWLHD_PROGRESS', 'False').lower() == 'true'

    # Reproducibility
    DEFAULT_SEED: int = int(os.environ.get('FLOWLHD_SEED', 0))

    # Training defaults (Adam, constant learning rate, global-norm clipping)
    EPOCHS: int = 10
    BATCH_SIZE: int = 64
    LEARNING_RATE: float = 1e-3
    ADAM_BETA1: float = 0.9
    ADAM_BETA2: float = 0.999
    ADAM_EPS: float = 1e-8
    CLIP_NORM: float = 5.0
    CHECKPOINT_EVERY: int = 0
    VALIDATION_FRACTION: float = 0.1

    # Flow construction
    COUPLING_CLAMP: float = 2.0
    FLOW2D_HIDDEN: int = 64
    DEQUANT_ALPHA: float = 1e-5

    # Metric evaluation
    EVAL_BATCH_SIZE: int = int(os.environ.get('FLOWLHD_EVAL_BATCH', 64))

    # Distortion: standard-normal draws clipped at +/- NOISE_CLIP_SIGMA, mapped onto [0, 255]
    NOISE_CLIP_SIGMA: float = 3.0

    # Validation limits
    MAX_PIXEL = 255
    MAX_SEPARATION = 2.0 ** 0.5

    DISTORTION_KINDS = ['gaussian_noise', 'gaussian_blur', 'salt_pepper']


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    SHOW_PROGRESS = False


class TestingConfig(Config):
    """Testing configuration"""
    CACHE_DIR = os.path.join(tempfile.gettempdir(), 'flowlhd-test-cache')
    EPOCHS = 2
    BATCH_SIZE = 16
    FLOW2D_HIDDEN = 16
    EVAL_BATCH_SIZE = 16


# Configuration mapping
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(config_name: str = None):
    """
    Resolve the active configuration class

    Args:
        config_name: Configuration name; defaults to FLOWLHD_ENV

    Returns:
        Configuration class
    """
    if config_name is None:
        config_name = os.environ.get('FLOWLHD_ENV', 'default')
    return config.get(config_name, Config)
