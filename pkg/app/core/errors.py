# app/core/errors.py
from typing import Optional


class SpottingError(Exception):
    """Root of every failure raised by the spotting pipeline."""


class ShapeError(SpottingError, ValueError):
    pass


class WeightDomainError(SpottingError, ValueError):
    pass


class EnsembleStateError(SpottingError, RuntimeError):
    pass


class UnknownCandidateError(SpottingError, LookupError):
    pass


class MissingScoresError(SpottingError, LookupError):
    pass


class UnknownVideoError(SpottingError, LookupError):
    pass


class EvaluationError(SpottingError):
    pass


class CoverageError(SpottingError, ValueError):
    pass


class ClipSizeError(SpottingError, ValueError):
    pass


class ConfigError(SpottingError, ValueError):
    pass


class GroundTruthError(SpottingError, ValueError):
    pass


class EnsembleMismatchError(SpottingError):
    pass


class FormatError(SpottingError, ValueError):
    """Malformed input file. `line` is 1-based when the problem has a location."""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = str(path)
        self.line = line
        self.reason = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")
