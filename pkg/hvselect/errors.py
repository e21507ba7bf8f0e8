# -*- coding: utf-8 -*-


class HvsException(Exception):
    """Base hvselect Exception."""


class TreeError(HvsException):
    """Exception raised when a hierarchy file or tree cannot be built."""


class IngestError(HvsException):
    """Exception raised when a panel, returns or factors file cannot be read."""


class PreprocessError(HvsException):
    """Exception raised when a preprocessing rule cannot be applied."""


class DegenerateDataError(HvsException):
    """Exception raised when data has no spread where spread is required (zero variance, tss = 0)."""


class InsufficientObservations(HvsException):
    """Exception raised when there are too few rows for the requested fit."""


class ImportanceError(HvsException):
    """Exception raised when category importance percentages are undefined."""


class KeyMismatchError(HvsException):
    """Exception raised when two evaluation records do not cover the same observations."""


class SpecError(HvsException):
    """Exception raised when a synthetic plant specification is invalid."""


class ConfigError(HvsException):
    """Exception raised when a run configuration value is invalid."""


class SchemaVersionError(HvsException):
    """Exception raised when a report file carries an unknown schema version."""


class ConvergenceFailure(HvsException):

    __slots__ = ('achieved', 'sweeps')

    def __init__(self, achieved: float, sweeps: int):
        self.achieved = achieved
        self.sweeps = sweeps
        super().__init__(f"coordinate descent stopped after {sweeps} sweeps (max change {achieved:.3e})")


class StageError(HvsException):
    """An error raised inside one HVS stage, tagged with the stage label."""

    __slots__ = ('stage', 'category_id', 'original')

    def __init__(self, stage: str, original: Exception, category_id: str = None):
        self.stage = stage
        self.category_id = category_id
        self.original = original
        self.message = f"{stage}" + (f"[{category_id}]" if category_id else "") + f": {original}"
        super().__init__(self.message)

    def __repr__(self):
        return self.message

    def __str__(self):
        return self.message
