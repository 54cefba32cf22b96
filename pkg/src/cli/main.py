"""
Command-line entry point
"""
import json
import os
import sys
from typing import List, Optional

from src.cli.commands import COMMANDS
from src.cli.parser import build_parser
from src.config import get_config
from src.utils.errors import ConfigError, FlowLHDError
from src.utils.logging_config import get_logger, setup_logging
from src.utils.validators import validate_run_config

logger = get_logger(__name__)


def load_run_config(path: Optional[str]) -> dict:
    """Read and validate a RunConfig JSON file; relative paths resolve against its directory"""
    if not path:
        return {}
    if not os.path.isfile(path):
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    is_valid, error, normalized = validate_run_config(document, base_dir=os.path.dirname(os.path.abspath(path)))
    if not is_valid:
        raise ConfigError(f"Invalid config {path}: {error}")
    return normalized


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Returns:
        0 on success, 1 on numerical or internal failure, 2 on usage, config or data errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    active = get_config()
    setup_logging(level=args.log_level or active.LOG_LEVEL, format_type=active.LOG_FORMAT)
    logger.debug(f"Running {args.command} with {vars(args)}")

    try:
        run = load_run_config(args.config)
        return COMMANDS[args.command](args, run)
    except FlowLHDError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        last_good = getattr(e, 'last_good_checkpoint', None)
        if last_good:
            print(f"last good checkpoint: {last_good}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}")
        print(f"internal error: {e}", file=sys.stderr)
        return 1
