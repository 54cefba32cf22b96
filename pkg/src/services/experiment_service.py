"""
Experiment protocols: D-FLD with trained flows, the 2D separation demo,
FLD sample efficiency and distortion monotonicity
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import pandas as pd

from src.config import Config
from src.data.dataset import Dataset
from src.data.synthetic import check_separation, gen_mixture4, gen_reference_gaussian
from src.flows.checkpoint import load_checkpoint
from src.flows.model import FlowModel, build_model, parse_arch
from src.numerics.rng import RngStream
from src.services.checkpoint_cache import CheckpointCache, dataset_fingerprint
from src.services.distortion_service import DistortionSpec, distort_dataset
from src.services.metric_service import (LikelihoodTable, MetricResult, dfld, dfld_from_table, dual_likelihood_table,
                                         fld_from_values, ordered_mean, sample_log_likelihoods)
from src.services.training_service import TrainConfig, holdout_split, train
from src.utils.errors import ConfigError, DataError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

T = TypeVar('T')
R = TypeVar('R')

DEMO2D_ARCH = 'flow2d(6)'
DEMO2D_SEPARATIONS = [0.0, 0.4, 0.7, 1.0, 1.2, 1.35]
SAMPLE_SIZES = [25, 50, 100, 200, 500]


def run_cells(fn: Callable[[T], R], cells: Sequence[T], workers: int = 1) -> List[R]:
    """Evaluate independent grid cells in order, optionally on a thread pool"""
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(cell) for cell in cells]


def gen_flow_config(cfg: TrainConfig) -> TrainConfig:
    """Same configuration with an independent seed, for the flow trained on generated data"""
    return replace(cfg, seed=RngStream(cfg.seed).split('gen-flow').integer_seed())


def train_flow(arch: Union[str, dict], dataset: Dataset, cfg: TrainConfig,
               cache: Optional[CheckpointCache] = None, role: str = 'flow',
               log_path: Optional[str] = None) -> Tuple[FlowModel, Optional[str]]:
    """
    Build and train a flow, reusing a cached checkpoint for identical inputs

    Returns:
        Tuple of (trained model, checkpoint path or None without a cache)
    """
    input_shape = dataset.sample_shape if dataset.kind == 'image' else None
    descriptor = parse_arch(arch, input_shape)
    key = None
    if cache is not None:
        key = cache.key(descriptor, cfg.to_dict(), dataset_fingerprint(dataset), role)
        cached = cache.get(key)
        if cached is not None:
            return cached, cache.path_for(key)

    model = build_model(descriptor, rng=RngStream(cfg.seed).split('init'))
    train(model, dataset, cfg, log_path=log_path)
    if cache is None:
        return model, None
    return model, cache.put(key, model)


def run_dfld(real: Dataset, gen: Dataset, arch: Union[str, dict], cfg: TrainConfig, seed: int,
             cache: Optional[CheckpointCache] = None, reuse_gen_ckpt: bool = False,
             gen_cfg: Optional[TrainConfig] = None, batch_size: Optional[int] = None,
             workers: int = 1) -> Tuple[MetricResult, LikelihoodTable]:
    """
    Train N_r on R and N_g on G with matching configuration, then evaluate D-FLD on R and G

    Args:
        reuse_gen_ckpt: Load N_g from N_r's checkpoint instead of training it
        gen_cfg: Configuration for N_g; defaults to cfg with an independent seed
        workers: Threads for likelihood evaluation

    Returns:
        Tuple of (MetricResult, per-sample likelihood table under both flows)
    """
    for name, dataset in (('real', real), ('generated', gen)):
        if len(dataset) < cfg.batch_size:
            raise DataError(f"The {name} set has {len(dataset)} samples, fewer than batch_size={cfg.batch_size}")
    if real.sample_shape != gen.sample_shape:
        raise DataError(f"Real samples have shape {real.sample_shape}, generated {gen.sample_shape}")

    flow_r, path_r = train_flow(arch, real, cfg, cache, role='real')
    if reuse_gen_ckpt:
        if path_r is None:
            flow_g, path_g = flow_r, None
        else:
            flow_g, path_g = load_checkpoint(path_r), path_r
    else:
        flow_g, path_g = train_flow(arch, gen, gen_cfg or gen_flow_config(cfg), cache, role='gen')
    checkpoints = [path for path in (path_r, path_g) if path]
    table = dual_likelihood_table(flow_r, flow_g, real, gen, seed, batch_size or Config.EVAL_BATCH_SIZE, workers)
    return dfld_from_table(table, seed, checkpoints), table


def demo2d(separations: Sequence[float], n: int, seed: int, cfg: TrainConfig, arch: str = DEMO2D_ARCH,
           cache: Optional[CheckpointCache] = None, workers: int = 1) -> pd.DataFrame:
    """
    D-FLD between a standard normal reference and a four-component mixture with the
    same overall mean and covariance, for each separation

    The reference set and N_r are shared across separations; mixture samples reuse
    the same component labels and base normals, so only the separation varies.
    """
    separations = [check_separation(s) for s in separations]
    if not separations:
        raise ConfigError("demo2d needs at least one separation")
    root = RngStream(seed)
    real = Dataset.from_array(gen_reference_gaussian(n, root.split('reference')), source='reference')
    flow_r, path_r = train_flow(arch, real, cfg, cache, role='real')
    gen_cfg = gen_flow_config(cfg)

    def cell(separation: float) -> float:
        gen = Dataset.from_array(gen_mixture4(n, separation, root.split('mixture')), source=f"mixture4(s={separation})")
        flow_g, path_g = train_flow(arch, gen, gen_cfg, cache, role='gen')
        result = dfld(flow_r, flow_g, real, gen, seed, checkpoints=[p for p in (path_r, path_g) if p])
        logger.info(f"separation {separation}: D-FLD={result.value:.4f}")
        return result.value

    values = run_cells(cell, separations, workers)
    return pd.DataFrame({'separation': separations, 'dfld': values})


def sample_efficiency(flow_r: FlowModel, real: Dataset, gen: Dataset, sizes: Sequence[int], runs: int,
                      seed: int, batch_size: Optional[int] = None) -> pd.DataFrame:
    """
    Mean and standard deviation of FLD over random subsamples of R and G per size n

    Log-likelihoods are computed once; subsamples index into them. Each run
    draws one ordering of R and one of G and takes its first n entries for every
    size, so sizes within a run are nested.
    """
    sizes = [int(n) for n in sizes]
    if runs < 1:
        raise ConfigError(f"runs must be at least 1, got {runs}")
    if not sizes or min(sizes) < 1:
        raise ConfigError(f"Sample sizes must be positive, got {sizes}")
    limit = min(len(real), len(gen))
    if max(sizes) > limit:
        raise DataError(f"Sample size {max(sizes)} exceeds the available samples "
                        f"(|R|={len(real)}, |G|={len(gen)})")

    kwargs = {'batch_size': batch_size} if batch_size else {}
    ll_real = sample_log_likelihoods(flow_r, real, seed, **kwargs)
    ll_gen = sample_log_likelihoods(flow_r, gen, seed, **kwargs)
    root = RngStream(seed).split('subsample')
    orders = [(root.split('real', run).permutation(len(real)), root.split('gen', run).permutation(len(gen)))
              for run in range(runs)]
    rows = []
    for n in sizes:
        values = []
        for order_r, order_g in orders:
            pick_r = np.sort(order_r[:n])
            pick_g = np.sort(order_g[:n])
            values.append(fld_from_values(ll_real[pick_r], ll_gen[pick_g]))
        degenerate = runs < 2
        std = 0.0 if degenerate else float(np.std(values, ddof=1))
        if degenerate:
            logger.warning(f"n={n}: a single run gives no spread; std reported as 0")
        rows.append({'n': n, 'mean_fld': ordered_mean(values), 'std_fld': std, 'degenerate': degenerate})
        logger.info(f"n={n}: mean FLD {rows[-1]['mean_fld']:.5f}, std {std:.5f}")
    return pd.DataFrame(rows, columns=['n', 'mean_fld', 'std_fld', 'degenerate'])


def held_out_split(flow_r: FlowModel, dataset: Dataset) -> Dataset:
    """
    The samples training held out for validation, rebuilt from the checkpoint's provenance

    Args:
        flow_r: Model whose provenance names the training data and split
        dataset: The set the model was trained on

    Returns:
        The held-out part, or the whole set when the model carries no provenance

    Raises:
        DataError: dataset is not the training set, or training held nothing out
    """
    info = flow_r.provenance
    if not info:
        logger.warning("The model records no training provenance; evaluating on the full set")
        return dataset
    if dataset_fingerprint(dataset) != info.get('data'):
        raise DataError(f"{dataset.source or 'The evaluation set'} is not the set this flow was trained on; "
                        f"pass --already-held-out if it is a separate held-out set")
    _, held = holdout_split(dataset, info['validation_fraction'], info['seed'], info.get('batch_size', 1))
    if len(held) == 0:
        raise DataError(f"Training held out no samples (validation_fraction={info['validation_fraction']}); "
                        f"evaluate a separate set with --already-held-out")
    logger.info(f"Evaluating on the {len(held)} samples training held out")
    return held


def monotonicity(flow_r: FlowModel, real: Dataset, kind: str, grid: Sequence[float], seed: int,
                 metric: str = 'fld', cfg: Optional[TrainConfig] = None, cache: Optional[CheckpointCache] = None,
                 workers: int = 1, batch_size: Optional[int] = None,
                 already_held_out: bool = False) -> pd.DataFrame:
    """
    Distort the evaluation set at each grid level and report FLD (or D-FLD)

    The evaluation set is the part of real that flow_r's training held out,
    unless already_held_out says real is a separate held-out set. For D-FLD
    a flow is trained on each distorted set with cfg (N_r is given).
    """
    grid = [float(v) for v in grid]
    if not grid:
        raise ConfigError("Monotonicity grid is empty")
    if len(real) == 0:
        raise DataError("Monotonicity needs a non-empty evaluation set")
    specs = [DistortionSpec(kind, level, seed) for level in grid]
    if metric not in ('fld', 'dfld'):
        raise ConfigError(f"Unknown metric '{metric}'. Valid: fld, dfld")
    if not already_held_out:
        real = held_out_split(flow_r, real)
    kwargs = {'batch_size': batch_size} if batch_size else {}

    if metric == 'fld':
        ll_real = sample_log_likelihoods(flow_r, real, seed, **kwargs)

        def cell(spec: DistortionSpec) -> float:
            distorted = distort_dataset(real, spec)
            return fld_from_values(ll_real, sample_log_likelihoods(flow_r, distorted, seed, **kwargs))
    else:
        if cfg is None:
            raise ConfigError("D-FLD monotonicity needs a training configuration for the generated-set flows")
        gen_cfg = gen_flow_config(cfg)

        def cell(spec: DistortionSpec) -> float:
            distorted = distort_dataset(real, spec)
            flow_g, _ = train_flow(flow_r.arch, distorted, gen_cfg, cache, role='gen')
            return dfld(flow_r, flow_g, real, distorted, seed, **kwargs).value

    values = run_cells(cell, specs, workers)
    for level, value in zip(grid, values):
        logger.info(f"{kind}={level}: {metric.upper()}={value:.5f}")
    return pd.DataFrame({'param': grid, metric: values})


def sample_model(model: FlowModel, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ConfigError(f"Number of samples must be at least 1, got {n}")
    return model.sample(RngStream(seed).split('sample'), n)