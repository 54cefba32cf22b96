"""
Error hierarchy for flowlhd

Every error carries the process exit code the CLI reports for it:
2 for usage, configuration, data and format problems, 1 for numerical or
internal failures.
"""
from typing import Optional


class FlowLHDError(Exception):
    """Base class for all flowlhd errors"""

    exit_code: int = 1


class ShapeError(FlowLHDError):
    """Tensor shapes do not fit the operation"""

    exit_code = 2


class StateError(FlowLHDError):
    """An object was used out of order (e.g. backward before forward)"""


class NumericsError(FlowLHDError):
    """A non-finite value appeared where a finite one is required"""

    def __init__(self, message: str, last_good_checkpoint: Optional[str] = None):
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint


class ConfigError(FlowLHDError):
    """Invalid configuration, architecture name or parameter value"""

    exit_code = 2


class DataError(FlowLHDError):
    """Missing, empty or inconsistent input data"""

    exit_code = 2


class FormatError(FlowLHDError):
    """A checkpoint or raw tensor file is malformed"""

    exit_code = 2

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DomainError(FlowLHDError):
    """Inputs fall outside the domain where a metric is defined"""

    exit_code = 2


class ArchMismatchError(FlowLHDError):
    """A checkpoint does not match the requested architecture or data"""

    exit_code = 2
