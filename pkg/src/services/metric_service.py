"""
Flow-based likelihood distances

FLD compares mean log-likelihoods of generated and real samples under one
flow trained on real data. D-FLD trains one flow per set and averages the
absolute per-sample log-likelihood gap over both sets, reported as log2(1 + m).

Log-likelihoods are total nats per sample. Dequantization noise is keyed by
sample id, so every flow and set sees the same noise for the same sample, and
all reductions sum in ascending id order.
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.config import Config
from src.data.dataset import Dataset
from src.flows.checkpoint import check_input_shape
from src.flows.model import FlowModel
from src.numerics.rng import RngStream
from src.utils.errors import ConfigError, DataError, DomainError, NumericsError
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

FLD = 'FLD'
DFLD = 'D-FLD'
LL_CONVENTION = 'total natural-log likelihood per sample (nats), not per dimension'
REAL = 'real'
GEN = 'gen'


def dequantization_noise(seed: int, sample_id: str, shape) -> np.ndarray:
    """Uniform base noise for one sample, keyed by (seed, id) only"""
    return RngStream(seed).split('dequant', sample_id).uniform(shape)


def sample_log_likelihoods(model: FlowModel, dataset: Dataset, seed: int,
                           batch_size: int = Config.EVAL_BATCH_SIZE, workers: int = 1) -> np.ndarray:
    """
    Per-sample log-likelihood (nats) of every sample, in dataset id order

    Batches are evaluated concurrently when workers > 1; forward passes do
    not mutate model parameters.
    """
    check_input_shape(model, dataset.sample_shape, source=dataset.source or 'dataset')
    if len(dataset) == 0:
        return np.zeros(0)

    def evaluate(batch_ids: List[str], batch: np.ndarray) -> np.ndarray:
        if not model.is_image:
            return model.log_prob(batch)
        noise = np.stack([dequantization_noise(seed, sample_id, batch.shape[1:]) for sample_id in batch_ids])
        return model.log_prob(batch, noise=noise)

    chunks = list(dataset.batches(batch_size))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda chunk: evaluate(*chunk), chunks))
    else:
        results = [evaluate(ids, batch) for ids, batch in chunks]
    return np.concatenate(results)


def ordered_mean(values: Sequence[float]) -> float:
    """Mean with an exactly rounded sum, independent of input order"""
    values = list(values)
    if not values:
        raise DataError("Cannot average an empty set")
    return math.fsum(values) / len(values)


@dataclass
class LikelihoodTable:
    """Per-sample log-likelihoods under N_r and optionally N_g"""

    ids: List[str]
    sets: List[str]
    ll_real_flow: np.ndarray
    ll_gen_flow: Optional[np.ndarray] = None

    def __post_init__(self):
        keys = list(zip(self.sets, self.ids))
        if len(set(keys)) != len(keys):
            raise DataError("LikelihoodTable ids must be unique within each set")
        for column in (self.ll_real_flow, self.ll_gen_flow):
            if column is not None and not np.all(np.isfinite(column)):
                raise NumericsError("LikelihoodTable holds non-finite log-likelihoods")

    def __len__(self) -> int:
        return len(self.ids)

    def rows(self, which: str) -> np.ndarray:
        return np.array([s == which for s in self.sets], dtype=bool)

    def distances(self) -> np.ndarray:
        if self.ll_gen_flow is None:
            raise ConfigError("Distances need log-likelihoods under both flows")
        return np.abs(self.ll_real_flow - self.ll_gen_flow)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'set': self.sets, 'id': self.ids, 'll_real_flow': self.ll_real_flow})
        if self.ll_gen_flow is not None:
            frame['ll_gen_flow'] = self.ll_gen_flow
            frame['distance'] = self.distances()
        return frame


@dataclass
class MetricResult:
    metric: str
    value: float
    n_real: int
    n_gen: int
    mean_ll_gen: float
    mean_ll_real: float
    seed: int
    checkpoints: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_same_spec(flow_r: FlowModel, flow_g: FlowModel) -> None:
    if flow_r.input_shape != flow_g.input_shape or flow_r.is_image != flow_g.is_image:
        raise ConfigError(f"Flows disagree on input: {flow_r.input_shape} vs {flow_g.input_shape}")


def per_image_distance(flow_r: FlowModel, flow_g: FlowModel, dataset: Dataset, seed: int,
                       batch_size: int = Config.EVAL_BATCH_SIZE) -> np.ndarray:
    """d(x) = |L_r(x) - L_g(x)| in nats for every sample, with shared noise per sample"""
    _check_same_spec(flow_r, flow_g)
    ll_r = sample_log_likelihoods(flow_r, dataset, seed, batch_size)
    ll_g = sample_log_likelihoods(flow_g, dataset, seed, batch_size)
    return np.abs(ll_r - ll_g)


def dual_likelihood_table(flow_r: FlowModel, flow_g: FlowModel, real: Dataset, gen: Dataset, seed: int,
                          batch_size: int = Config.EVAL_BATCH_SIZE, workers: int = 1) -> LikelihoodTable:
    """Both flows evaluated on every sample of R and G"""
    _check_same_spec(flow_r, flow_g)
    columns_r, columns_g = [], []
    for dataset in (real, gen):
        columns_r.append(sample_log_likelihoods(flow_r, dataset, seed, batch_size, workers))
        columns_g.append(sample_log_likelihoods(flow_g, dataset, seed, batch_size, workers))
    return LikelihoodTable(ids=list(real.ids) + list(gen.ids),
                           sets=[REAL] * len(real) + [GEN] * len(gen),
                           ll_real_flow=np.concatenate(columns_r), ll_gen_flow=np.concatenate(columns_g))


def dfld_from_table(table: LikelihoodTable, seed: int, checkpoints: Optional[List[str]] = None) -> MetricResult:
    """D-FLD = log2(1 + m), m = mean d(x) over R and G, summed in ascending (set, id) order"""
    if len(table) == 0:
        raise DataError("D-FLD needs at least one real or generated sample")
    order = sorted(range(len(table)), key=lambda i: (table.sets[i], table.ids[i]))
    distances = table.distances()
    m = ordered_mean(distances[i] for i in order)
    real_rows, gen_rows = table.rows(REAL), table.rows(GEN)
    n_real, n_gen = int(real_rows.sum()), int(gen_rows.sum())
    if n_real and n_gen and max(n_real, n_gen) > 4 * min(n_real, n_gen):
        logger.warning(f"Unbalanced sets (|R|={n_real}, |G|={n_gen}); m is dominated by the larger set")
    mean_r = ordered_mean(table.ll_real_flow[real_rows]) if n_real else float('nan')
    mean_g = ordered_mean(table.ll_gen_flow[gen_rows]) if n_gen else float('nan')
    value = math.log2(1.0 + m)
    logger.info(f"D-FLD={value:.6f} (m={m:.6f} nats, |R|={n_real}, |G|={n_gen})")
    return MetricResult(metric=DFLD, value=value, n_real=n_real, n_gen=n_gen, mean_ll_gen=mean_g,
                        mean_ll_real=mean_r, seed=seed, checkpoints=list(checkpoints or []),
                        metadata={'ll_convention': LL_CONVENTION, 'mean_distance': m,
                                  'mean_ll_real_under': 'N_r', 'mean_ll_gen_under': 'N_g'})


def dfld(flow_r: FlowModel, flow_g: FlowModel, real: Dataset, gen: Dataset, seed: int,
         batch_size: int = Config.EVAL_BATCH_SIZE, checkpoints: Optional[List[str]] = None,
         workers: int = 1) -> MetricResult:
    """
    Dual-flow likelihood distance

    Raises:
        DataError: Both sets empty
        ConfigError: Flows with different input specs
    """
    if len(real) + len(gen) == 0:
        raise DataError("D-FLD needs at least one real or generated sample")
    table = dual_likelihood_table(flow_r, flow_g, real, gen, seed, batch_size, workers)
    return dfld_from_table(table, seed, checkpoints)


def fld_from_values(ll_real: Sequence[float], ll_gen: Sequence[float]) -> float:
    """Mean L over G divided by mean L over R; both means must be negative"""
    if len(ll_real) == 0 or len(ll_gen) == 0:
        raise DataError("FLD needs non-empty real and generated sets")
    mean_r = ordered_mean(ll_real)
    mean_g = ordered_mean(ll_gen)
    if mean_r >= 0 or mean_g >= 0:
        raise DomainError(f"FLD is undefined for non-negative mean log-likelihoods "
                          f"(real {mean_r:.6g}, generated {mean_g:.6g}); use D-FLD for such data")
    return mean_g / mean_r


def likelihood_table(flow_r: FlowModel, real: Dataset, gen: Dataset, seed: int,
                     batch_size: int = Config.EVAL_BATCH_SIZE, workers: int = 1) -> LikelihoodTable:
    ll_real = sample_log_likelihoods(flow_r, real, seed, batch_size, workers)
    ll_gen = sample_log_likelihoods(flow_r, gen, seed, batch_size, workers)
    return LikelihoodTable(ids=list(real.ids) + list(gen.ids), sets=[REAL] * len(real) + [GEN] * len(gen),
                           ll_real_flow=np.concatenate([ll_real, ll_gen]))


def fld_from_table(table: LikelihoodTable, seed: int, checkpoints: Optional[List[str]] = None) -> MetricResult:
    real_rows, gen_rows = table.rows(REAL), table.rows(GEN)
    ll_real = table.ll_real_flow[real_rows]
    ll_gen = table.ll_real_flow[gen_rows]
    value = fld_from_values(ll_real, ll_gen)
    result = MetricResult(metric=FLD, value=value, n_real=len(ll_real), n_gen=len(ll_gen),
                          mean_ll_gen=ordered_mean(ll_gen), mean_ll_real=ordered_mean(ll_real), seed=seed,
                          checkpoints=list(checkpoints or []), metadata={'ll_convention': LL_CONVENTION})
    logger.info(f"FLD={value:.6f} (|R|={result.n_real}, |G|={result.n_gen})")
    return result


def fld(flow_r: FlowModel, real: Dataset, gen: Dataset, seed: int, batch_size: int = Config.EVAL_BATCH_SIZE,
        checkpoints: Optional[List[str]] = None, workers: int = 1) -> MetricResult:
    """
    Flow-based likelihood distance under a flow trained on real data

    Raises:
        DataError: Either set empty
        DomainError: A mean log-likelihood is non-negative
    """
    if len(real) == 0 or len(gen) == 0:
        raise DataError("FLD needs non-empty real and generated sets")
    table = likelihood_table(flow_r, real, gen, seed, batch_size, workers)
    return fld_from_table(table, seed, checkpoints)
