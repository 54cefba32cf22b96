"""
Maximum-likelihood training of flow models
"""
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config import Config
from src.data.dataset import Dataset
from src.flows.checkpoint import check_input_shape, save_checkpoint
from src.flows.layers import ActNorm
from src.flows.model import FlowModel
from src.numerics.params import ParamStore
from src.numerics.rng import RngStream
from src.services.checkpoint_cache import dataset_fingerprint
from src.utils.errors import ConfigError, DataError, NumericsError
from src.utils.logging_config import get_logger
from src.utils.reports import config_hash, write_csv

logger = get_logger(__name__)

INIT_SAMPLES = 512


@dataclass
class TrainConfig:
    """Training hyperparameters"""

    epochs: int = Config.EPOCHS
    batch_size: int = Config.BATCH_SIZE
    learning_rate: float = Config.LEARNING_RATE
    beta1: float = Config.ADAM_BETA1
    beta2: float = Config.ADAM_BETA2
    eps: float = Config.ADAM_EPS
    clip_norm: float = Config.CLIP_NORM
    seed: int = Config.DEFAULT_SEED
    checkpoint_every: int = Config.CHECKPOINT_EVERY
    validation_fraction: float = Config.VALIDATION_FRACTION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0) or self.eps <= 0:
            raise ConfigError("Adam needs beta1, beta2 in [0, 1) and eps > 0")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.checkpoint_every < 0 or self.seed < 0:
            raise ConfigError("checkpoint_every and seed must be non-negative")

    @classmethod
    def from_dict(cls, values: Optional[Dict[str, Any]] = None, **overrides) -> 'TrainConfig':
        merged = dict(values or {})
        merged.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ConfigError(f"Unknown training option(s): {', '.join(unknown)}")
        return cls(**merged)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainHistory:
    """Per-epoch losses; bits/dim for image models, nats/point for 2D models"""

    unit: str
    train_nll: List[float] = field(default_factory=list)
    val_nll: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    initial_val_nll: Optional[float] = None
    checkpoints: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_nll)

    def smoothed_train_nll(self, window: int = 5) -> List[float]:
        """Trailing moving average of the training loss; empty with fewer than window epochs"""
        if window < 1:
            raise ConfigError(f"Smoothing window must be at least 1, got {window}")
        return pd.Series(self.train_nll, dtype=float).rolling(window).mean().dropna().tolist()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'epoch': list(range(1, len(self) + 1)),
            'train_nll': self.train_nll,
            'val_nll': self.val_nll,
            'seconds': self.seconds,
        })


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = Config.LEARNING_RATE
    beta1: float = Config.ADAM_BETA1
    beta2: float = Config.ADAM_BETA2
    eps: float = Config.ADAM_EPS


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              hyper: AdamHyper) -> Dict[str, np.ndarray]:
    """
    One Adam update with bias correction, applied in place

    Args:
        params: Parameter arrays by name (modified in place)
        grads: Gradients by name
        state: Moment estimates and step counter (modified in place)
        hyper: Learning rate and Adam constants

    Returns:
        The updated params mapping
    """
    state.step += 1
    correction1 = 1.0 - hyper.beta1 ** state.step
    correction2 = 1.0 - hyper.beta2 ** state.step
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ConfigError(f"Gradient for {name} has shape {grad.shape}, parameter has {value.shape}")
        m = state.m.setdefault(name, np.zeros_like(value))
        v = state.v.setdefault(name, np.zeros_like(value))
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * grad
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * grad * grad
        value -= hyper.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + hyper.eps)
    return params


def clip_grad_norm(params: ParamStore, max_norm: float) -> float:
    """Rescale gradients so their global L2 norm is at most max_norm; returns the pre-clip norm"""
    norm = params.grad_norm()
    if not math.isfinite(norm):
        raise NumericsError(f"Gradient norm is not finite ({norm})")
    if norm > max_norm:
        params.scale_grads(max_norm / norm)
    return norm


def nll_loss(model: FlowModel, batch: np.ndarray, rng: Optional[RngStream] = None) -> float:
    """Mean negative log-likelihood: bits/dim for image models, nats for 2D models"""
    if len(batch) == 0:
        raise DataError("nll_loss needs a non-empty batch")
    log_likelihood = model.log_prob(batch, rng=rng)
    return float(-np.mean(log_likelihood) / model.loss_scale())


def evaluate_nll(model: FlowModel, dataset: Dataset, rng: RngStream,
                 batch_size: int = Config.EVAL_BATCH_SIZE) -> float:
    """Sample-count weighted mean of nll_loss over a dataset"""
    if len(dataset) == 0:
        raise DataError("Cannot evaluate on an empty dataset")
    total = 0.0
    for index, (_, batch) in enumerate(dataset.batches(batch_size)):
        total += nll_loss(model, batch, rng.split('batch', index)) * len(batch)
    return total / len(dataset)


def holdout_split(dataset: Dataset, fraction: float, seed: int, batch_size: int = 1):
    """
    (train, held-out) split; the held-out part is the validation set train() uses for the same seed

    The held-out part shrinks so the training part keeps at least one full batch.
    """
    return dataset.split(fraction, RngStream(seed).split('validation-split'), min_main=batch_size)


def training_provenance(dataset: Dataset, cfg: TrainConfig, held_out: int) -> Dict[str, Any]:
    """What a checkpoint records about its training data, enough to rebuild the validation split"""
    return {
        'validation_fraction': cfg.validation_fraction,
        'seed': cfg.seed,
        'batch_size': cfg.batch_size,
        'samples': len(dataset),
        'held_out': held_out,
        'data': dataset_fingerprint(dataset),
    }


def _initialize(model: FlowModel, dataset: Dataset) -> None:
    if any(isinstance(layer, ActNorm) and not layer.initialized for layer in model.layers):
        model.initialize(dataset.samples[:INIT_SAMPLES])
        logger.debug(f"Initialised ActNorm from {min(len(dataset), INIT_SAMPLES)} samples")


def train(model: FlowModel, dataset: Dataset, cfg: TrainConfig, checkpoint_dir: Optional[str] = None,
          log_path: Optional[str] = None) -> TrainHistory:
    """
    Train a model by maximum likelihood with Adam

    Args:
        model: Model to train in place
        dataset: Training data; a validation split is held out per cfg
        cfg: Training configuration
        checkpoint_dir: Where periodic checkpoints go when cfg.checkpoint_every > 0
        log_path: Optional CSV training log (epoch, train_nll, val_nll, seconds)

    Returns:
        TrainHistory with one entry per epoch

    Raises:
        DataError: Empty dataset or fewer samples than batch_size
        NumericsError: Non-finite loss; carries the last good checkpoint path
    """
    if len(dataset) == 0:
        raise DataError("Training dataset is empty")
    check_input_shape(model, dataset.sample_shape, source=dataset.source or 'training data')

    root = RngStream(cfg.seed)
    if len(dataset) < cfg.batch_size:
        raise DataError(f"Training set has {len(dataset)} samples, fewer than batch_size={cfg.batch_size}")
    train_set, val_set = holdout_split(dataset, cfg.validation_fraction, cfg.seed, cfg.batch_size)
    model.provenance = training_provenance(dataset, cfg, len(val_set))

    history = TrainHistory(unit='bits/dim' if model.is_image else 'nats')
    val_stream = root.split('validation-noise')
    if len(val_set):
        history.initial_val_nll = evaluate_nll(model, val_set, val_stream)
    if cfg.epochs == 0:
        return history

    _initialize(model, train_set)
    hyper = AdamHyper(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    state = AdamState()
    param_values = dict(model.params.items())
    last_good: Optional[str] = None

    epochs = tqdm(range(cfg.epochs), desc='train', unit='epoch', disable=not Config.SHOW_PROGRESS)
    for epoch in epochs:
        started = time.perf_counter()
        total, count = 0.0, 0
        order = root.split('epoch', epoch)
        for step, (_, batch) in enumerate(train_set.batches(cfg.batch_size, rng=order)):
            try:
                loss = model.loss_and_grad(batch, rng=root.split('noise', epoch, step))
                clip_grad_norm(model.params, cfg.clip_norm)
            except NumericsError as e:
                logger.error(f"Non-finite values at epoch {epoch + 1} step {step}: {e}; last good checkpoint {last_good}")
                raise NumericsError(f"Training diverged at epoch {epoch + 1}, step {step}: {e}",
                                    last_good_checkpoint=last_good)
            grads = {name: model.params.grad(name) for name in param_values}
            adam_step(param_values, grads, state, hyper)
            total += loss * len(batch)
            count += len(batch)

        history.train_nll.append(total / count)
        history.val_nll.append(evaluate_nll(model, val_set, val_stream) if len(val_set) else float('nan'))
        history.seconds.append(time.perf_counter() - started)
        logger.info(f"epoch {epoch + 1}/{cfg.epochs} train_nll={history.train_nll[-1]:.4f} "
                    f"val_nll={history.val_nll[-1]:.4f} {history.unit}")

        if checkpoint_dir and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            last_good = save_checkpoint(model, os.path.join(checkpoint_dir, f"epoch{epoch + 1:04d}.fldc"))
            history.checkpoints.append(last_good)

    if log_path:
        write_csv(history.to_frame(), log_path, config_hash(cfg.to_dict()), cfg.seed)
    return history
