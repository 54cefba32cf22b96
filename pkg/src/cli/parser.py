"""
Argument parser for the flowlhd command line
"""
import argparse

from src.config import Config

GENERATORS = ['two_moons', 'reference_gaussian', 'mixture4']


def _common() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', help='RunConfig JSON file; flags override its values')
    parent.add_argument('--seed', type=int, help='Random seed (default: config or FLOWLHD_SEED)')
    parent.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')
    return parent


def _training(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('training')
    group.add_argument('--arch', help='dfld-simple, fld-multiscale or flow2d(k)')
    group.add_argument('--epochs', type=int)
    group.add_argument('--batch-size', type=int)
    group.add_argument('--lr', type=float, dest='learning_rate')
    group.add_argument('--cache-dir', help=f"Checkpoint cache (default: FLOWLHD_CACHE_DIR or {Config.CACHE_DIR})")


def _images(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--resize', action='store_true', help='Resize images that do not match the model')
    parser.add_argument('--batch-size-eval', type=int, dest='eval_batch_size', help='Evaluation batch size')
    parser.add_argument('--parallel', type=int, default=None, help='Worker threads for independent cells')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='flowlhd', description='Flow-based likelihood distances (FLD, D-FLD)')
    commands = parser.add_subparsers(dest='command', metavar='command')
    commands.required = True
    common = _common()

    train = commands.add_parser('train', parents=[common], help='Train a flow on a dataset')
    train.add_argument('--data', help='PNG directory or raw tensor file')
    train.add_argument('--out', help='Checkpoint path to write')
    train.add_argument('--log', help='Training history CSV (default: <out>.history.csv)')
    train.add_argument('--resolution', type=int, help='Expected image side length')
    train.add_argument('--resize', action='store_true')
    train.add_argument('--checkpoint-dir', help='Directory for periodic checkpoints')
    _training(train)

    fld = commands.add_parser('fld', parents=[common], help='FLD of a generated set under a flow trained on real data')
    fld.add_argument('--real')
    fld.add_argument('--gen')
    fld.add_argument('--ckpt', required=True)
    fld.add_argument('--table', help='Write the per-sample log-likelihood table as CSV')
    _images(fld)

    dfld = commands.add_parser('dfld', parents=[common], help='Train flows on both sets and compute D-FLD')
    dfld.add_argument('--real')
    dfld.add_argument('--gen')
    dfld.add_argument('--reuse-gen-ckpt', action='store_true', help="Use N_r's checkpoint as N_g")
    dfld.add_argument('--table', help='Write the per-sample log-likelihood table as CSV')
    _training(dfld)
    _images(dfld)

    distort = commands.add_parser('distort', parents=[common], help='Apply a distortion to a dataset')
    distort.add_argument('--in', dest='input', required=True)
    distort.add_argument('--out', required=True)
    distort.add_argument('--kind', required=True, help=', '.join(Config.DISTORTION_KINDS))
    distort.add_argument('--param', type=float, required=True)

    demo = commands.add_parser('demo2d', parents=[common], help='D-FLD between a Gaussian and four-component mixtures')
    demo.add_argument('--separations', required=True, help='Comma-separated separations in [0, sqrt(2))')
    demo.add_argument('--n', type=int, default=20000, help='Points per set')
    demo.add_argument('--out', required=True, help='CSV path')
    demo.add_argument('--parallel', type=int, default=None)
    _training(demo)

    efficiency = commands.add_parser('sample-efficiency', parents=[common],
                                     help='FLD mean and spread over random subsamples')
    efficiency.add_argument('--real')
    efficiency.add_argument('--gen')
    efficiency.add_argument('--ckpt', required=True)
    efficiency.add_argument('--sizes', default='25,50,100,200,500')
    efficiency.add_argument('--runs', type=int, default=10)
    efficiency.add_argument('--out', required=True)
    _images(efficiency)

    mono = commands.add_parser('monotonicity', parents=[common], help='Metric across distortion levels')
    mono.add_argument('--real')
    mono.add_argument('--ckpt', required=True)
    mono.add_argument('--kind', required=True)
    mono.add_argument('--grid', required=True, help='Comma-separated distortion levels')
    mono.add_argument('--out', required=True)
    mono.add_argument('--metric', choices=['fld', 'dfld'], default='fld')
    mono.add_argument('--already-held-out', action='store_true',
                      help="--real is a separate held-out set; by default the split training held out is rebuilt "
                           "from the checkpoint")
    _training(mono)
    _images(mono)

    generate = commands.add_parser('generate', parents=[common], help='Write a synthetic 2D dataset')
    generate.add_argument('--kind', choices=GENERATORS, required=True)
    generate.add_argument('--n', type=int, required=True)
    generate.add_argument('--out', required=True, help='Raw tensor file')
    generate.add_argument('--noise-sd', type=float, default=0.1, help='two_moons noise')
    generate.add_argument('--separation', type=float, default=0.0, help='mixture4 separation')

    sample = commands.add_parser('sample', parents=[common], help='Draw samples from a trained flow')
    sample.add_argument('--ckpt', required=True)
    sample.add_argument('--n', type=int, required=True)
    sample.add_argument('--out', required=True, help='PNG directory or .tnsr file')

    return parser
