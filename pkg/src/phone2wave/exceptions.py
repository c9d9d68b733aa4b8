#!/usr/bin/env python3

from typing import List, Optional


class Phone2WaveError(Exception):
    """Base class for all errors raised by phone2wave"""


class ConfigurationError(Phone2WaveError, ValueError):
    """Invalid configuration value; carries the offending field paths"""

    def __init__(self, message: str, field_paths: Optional[List[str]] = None):
        super().__init__(message)
        self.field_paths = field_paths or []


class ContractError(Phone2WaveError, ValueError):
    """An operation was called outside its precondition"""


class ShapeError(ContractError):
    """Array lengths or shapes disagree"""


class ResolutionError(ContractError):
    """Temporal resolutions of the decoder branches do not line up"""

    def __init__(self, stage: str, expected: int, actual: int):
        super().__init__(
            f"Resolution mismatch at {stage}: expected length {expected}, got {actual}"
        )
        self.stage = stage
        self.expected = expected
        self.actual = actual


class AlignmentError(ContractError):
    """Gaussian upsampling weights are degenerate"""


class UnknownTokenError(ContractError):
    """Token id outside the vocabulary"""


class IntegrityError(Phone2WaveError):
    """Container is truncated, has a bad magic or a checksum mismatch"""


class VersionMismatchError(IntegrityError):
    """Container was written by an incompatible format version"""


class NonFiniteError(Phone2WaveError, FloatingPointError):
    """A loss or gradient became NaN or infinite"""

    def __init__(self, tensor_name: str, step: Optional[int] = None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"Non-finite values in '{tensor_name}'{where}")
        self.tensor_name = tensor_name
        self.step = step
