"""
Subcommand handlers

Each handler takes the parsed arguments and the validated RunConfig and
returns a process exit code. Results go to stdout; logs go to stderr.
"""
import argparse
import json
import os
from typing import Any, Dict, Optional

from src.config import Config
from src.data.dataset import Dataset
from src.data.image_io import load_dataset, save_dataset
from src.data.synthetic import gen_mixture4, gen_reference_gaussian, gen_two_moons
from src.data.tensor_io import write_tensor
from src.flows.checkpoint import check_input_shape, load_checkpoint, save_checkpoint
from src.flows.model import FlowModel, build_model, parse_arch
from src.numerics.rng import RngStream
from src.services.checkpoint_cache import CheckpointCache
from src.services.distortion_service import DistortionSpec, distort_dataset
from src.services.experiment_service import (DEMO2D_ARCH, demo2d, monotonicity, run_dfld, sample_efficiency,
                                             sample_model)
from src.services.metric_service import fld_from_table, likelihood_table
from src.services.training_service import TrainConfig, train
from src.utils.errors import ConfigError, DataError
from src.utils.logging_config import get_logger
from src.utils.reports import config_hash, write_csv
from src.utils.validators import (parse_float_list, parse_int_list, validate_distortion, validate_sample_sizes,
                                  validate_separations)

logger = get_logger(__name__)


def _seed(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    if args.seed is not None:
        return args.seed
    return run.get('seed', Config.DEFAULT_SEED)


def _path(args: argparse.Namespace, run: Dict[str, Any], name: str, required: bool = True) -> Optional[str]:
    value = getattr(args, name, None) or run.get('data', {}).get(name)
    if value is None and required:
        raise ConfigError(f"--{name} is required (or data.{name} in the config file)")
    return value


def _train_config(args: argparse.Namespace, run: Dict[str, Any]) -> TrainConfig:
    section = dict(run.get('train', {}))
    section.setdefault('seed', _seed(args, run))
    return TrainConfig.from_dict(section, epochs=getattr(args, 'epochs', None),
                                 batch_size=getattr(args, 'batch_size', None),
                                 learning_rate=getattr(args, 'learning_rate', None))


def _metric_options(args: argparse.Namespace, run: Dict[str, Any]) -> Dict[str, int]:
    section = run.get('metric', {})
    return {
        'batch_size': getattr(args, 'eval_batch_size', None) or section.get('batch_size', Config.EVAL_BATCH_SIZE),
        'workers': getattr(args, 'parallel', None) or section.get('workers', 1),
    }


def _metric_seed(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    if args.seed is not None:
        return args.seed
    return run.get('metric', {}).get('seed', run.get('seed', Config.DEFAULT_SEED))


def _cache(args: argparse.Namespace) -> CheckpointCache:
    return CheckpointCache(getattr(args, 'cache_dir', None) or Config.CACHE_DIR)


def _load_for_model(path: str, model: FlowModel, args: argparse.Namespace) -> Dataset:
    resolution = model.input_shape[1:] if model.is_image and getattr(args, 'resize', False) else None
    dataset = load_dataset(path, resolution, resize=bool(resolution))
    check_input_shape(model, dataset.sample_shape, source=path)
    return dataset


def _report_hash(args: argparse.Namespace, run: Dict[str, Any]) -> str:
    flags = {k: v for k, v in vars(args).items() if k not in ('func', 'log_level')}
    return config_hash({'flags': flags, 'config': run})


def cmd_train(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    data_path = args.data or run.get('data', {}).get('real')
    if data_path is None:
        raise ConfigError('--data is required (or data.real in the config file)')
    out = _path(args, run, 'out')
    resolution = args.resolution or run.get('data', {}).get('resolution')
    dataset = load_dataset(data_path, resolution, resize=args.resize or run.get('data', {}).get('resize', False))
    cfg = _train_config(args, run)
    default_arch = 'dfld-simple' if dataset.kind == 'image' else DEMO2D_ARCH
    arch = parse_arch(args.arch or run.get('arch') or default_arch,
                      dataset.sample_shape if dataset.kind == 'image' else None)
    model = build_model(arch, rng=RngStream(cfg.seed).split('init'))
    for line in model.summary():
        logger.info(line)

    log_path = args.log or f"{out}.history.csv"
    history = train(model, dataset, cfg, checkpoint_dir=args.checkpoint_dir, log_path=log_path)
    save_checkpoint(model, out)
    print(json.dumps({
        'checkpoint': out,
        'history': log_path,
        'epochs': len(history),
        'unit': history.unit,
        'initial_val_nll': history.initial_val_nll,
        'final_train_nll': history.train_nll[-1] if len(history) else None,
        'final_val_nll': history.val_nll[-1] if len(history) else None,
        'num_params': model.num_params(),
    }, indent=2))
    return 0


def cmd_fld(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    model = load_checkpoint(args.ckpt)
    real = _load_for_model(_path(args, run, 'real'), model, args)
    gen = _load_for_model(_path(args, run, 'gen'), model, args)
    seed = _metric_seed(args, run)
    options = _metric_options(args, run)
    table = likelihood_table(model, real, gen, seed, options['batch_size'], options['workers'])
    result = fld_from_table(table, seed, checkpoints=[args.ckpt])
    if args.table:
        write_csv(table.to_frame(), args.table, _report_hash(args, run), seed)
    print(result.to_json())
    return 0


def cmd_dfld(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    real = load_dataset(_path(args, run, 'real'))
    gen = load_dataset(_path(args, run, 'gen'))
    cfg = _train_config(args, run)
    seed = _metric_seed(args, run)
    options = _metric_options(args, run)
    default_arch = 'dfld-simple' if real.kind == 'image' else DEMO2D_ARCH
    arch = args.arch or run.get('arch') or default_arch
    result, table = run_dfld(real, gen, arch, cfg, seed, cache=_cache(args), reuse_gen_ckpt=args.reuse_gen_ckpt,
                             batch_size=options['batch_size'], workers=options['workers'])
    if args.table:
        write_csv(table.to_frame(), args.table, _report_hash(args, run), seed)
    print(result.to_json())
    return 0


def cmd_distort(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    is_valid, error = validate_distortion(args.kind, args.param)
    if not is_valid:
        raise ConfigError(error)
    dataset = load_dataset(args.input)
    if dataset.kind != 'image':
        raise DataError(f"{args.input} holds points; distortions apply to images")
    distorted = distort_dataset(dataset, DistortionSpec(args.kind, args.param, _seed(args, run)))
    if os.path.isfile(args.input):
        write_tensor(args.out, distorted.samples)
    else:
        save_dataset(distorted, args.out)
    print(json.dumps({'out': args.out, 'kind': args.kind, 'param': args.param, 'count': len(distorted)}))
    return 0


def cmd_demo2d(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    separations = parse_float_list(args.separations)
    if separations is None:
        raise ConfigError(f"Could not parse separations '{args.separations}'")
    is_valid, error = validate_separations(separations)
    if not is_valid:
        raise ConfigError(error)
    seed = _seed(args, run)
    cfg = _train_config(args, run)
    arch = args.arch or run.get('experiment', {}).get('arch') or run.get('arch') or DEMO2D_ARCH
    workers = args.parallel or run.get('metric', {}).get('workers', 1)
    frame = demo2d(separations, args.n, seed, cfg, arch=arch, cache=_cache(args), workers=workers)
    write_csv(frame, args.out, _report_hash(args, run), seed)
    print(frame.to_csv(index=False), end='')
    return 0


def cmd_sample_efficiency(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    sizes = parse_int_list(args.sizes)
    if sizes is None:
        raise ConfigError(f"Could not parse sizes '{args.sizes}'")
    is_valid, error = validate_sample_sizes(sizes, args.runs)
    if not is_valid:
        raise ConfigError(error)
    model = load_checkpoint(args.ckpt)
    real = _load_for_model(_path(args, run, 'real'), model, args)
    gen = _load_for_model(_path(args, run, 'gen'), model, args)
    seed = _metric_seed(args, run)
    frame = sample_efficiency(model, real, gen, sizes, args.runs, seed,
                              batch_size=_metric_options(args, run)['batch_size'])
    write_csv(frame, args.out, _report_hash(args, run), seed)
    print(frame.to_csv(index=False), end='')
    return 0


def cmd_monotonicity(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    grid = parse_float_list(args.grid)
    if grid is None:
        raise ConfigError(f"Could not parse grid '{args.grid}'")
    for level in grid:
        is_valid, error = validate_distortion(args.kind, level)
        if not is_valid:
            raise ConfigError(error)
    model = load_checkpoint(args.ckpt)
    real = _load_for_model(_path(args, run, 'real'), model, args)
    cfg = _train_config(args, run)
    already_held_out = args.already_held_out or run.get('experiment', {}).get('already_held_out', False)
    seed = _metric_seed(args, run)
    options = _metric_options(args, run)
    frame = monotonicity(model, real, args.kind, grid, seed, metric=args.metric, cfg=cfg, cache=_cache(args),
                         workers=options['workers'], batch_size=options['batch_size'],
                         already_held_out=already_held_out)
    write_csv(frame, args.out, _report_hash(args, run), seed)
    print(frame.to_csv(index=False), end='')
    return 0


def cmd_generate(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    rng = RngStream(_seed(args, run)).split('generate', args.kind)
    if args.kind == 'two_moons':
        points = gen_two_moons(args.n, args.noise_sd, rng)
    elif args.kind == 'reference_gaussian':
        points = gen_reference_gaussian(args.n, rng)
    else:
        points = gen_mixture4(args.n, args.separation, rng)
    write_tensor(args.out, points)
    print(json.dumps({'out': args.out, 'kind': args.kind, 'count': int(points.shape[0])}))
    return 0


def cmd_sample(args: argparse.Namespace, run: Dict[str, Any]) -> int:
    model = load_checkpoint(args.ckpt)
    samples = sample_model(model, args.n, _seed(args, run))
    save_dataset(Dataset.from_array(samples, source=args.ckpt), args.out)
    print(json.dumps({'out': args.out, 'count': int(samples.shape[0])}))
    return 0


COMMANDS = {
    'train': cmd_train,
    'fld': cmd_fld,
    'dfld': cmd_dfld,
    'distort': cmd_distort,
    'demo2d': cmd_demo2d,
    'sample-efficiency': cmd_sample_efficiency,
    'monotonicity': cmd_monotonicity,
    'generate': cmd_generate,
    'sample': cmd_sample,
}
