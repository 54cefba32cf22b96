"""
Logging configuration for flowlhd
"""
import json
import logging
import sys

from tqdm import tqdm

QUIET_LOGGERS = ('PIL', 'matplotlib')


class JsonFormatter(logging.Formatter):
    """One JSON object per record; messages are escaped, so quotes and JSON payloads survive"""

    def format(self, record: logging.LogRecord) -> str:
        document = {
            'timestamp': self.formatTime(record),
            'level': record.levelname,
            'module': record.name,
            'message': record.getMessage(),
            'function': record.funcName,
            'line': record.lineno,
        }
        if record.exc_info:
            document['exception'] = self.formatException(record.exc_info)
        return json.dumps(document)


class ProgressAwareHandler(logging.StreamHandler):
    """Writes through tqdm so log lines do not break an active progress bar"""

    def emit(self, record: logging.LogRecord) -> None:
        try:
            tqdm.write(self.format(record), file=self.stream)
        except Exception:
            self.handleError(record)


def setup_logging(level: str = "INFO", format_type: str = "standard") -> None:
    """
    Setup application logging

    Log records go to stderr; stdout is reserved for command results
    such as MetricResult JSON. Calling this again replaces the handler
    it installed before and leaves other handlers alone.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        format_type: Format type ('json' or 'standard')
    """
    log_level = getattr(logging, level.upper(), logging.INFO)

    if format_type == "json":
        formatter = JsonFormatter()
    else:
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in root_logger.handlers[:]:
        if isinstance(handler, ProgressAwareHandler):
            root_logger.removeHandler(handler)

    console_handler = ProgressAwareHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance

    Args:
        name: Logger name

    Returns:
        Logger instance
    """
    return logging.getLogger(name)
