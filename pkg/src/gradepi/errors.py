"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class GradEpiError(Exception):
    """Base class for every error raised by this package."""


class DataError(GradEpiError):
    """Invalid input data; the CLI maps these to exit code 2."""


class NonFiniteInput(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class DomainError(DataError):
    pass


class NotScalar(GradEpiError):
    pass


class DetachedTensor(GradEpiError):
    pass


class InvalidSpec(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class IntegrityError(DataError):
    pass


class InconsistentState(GradEpiError):
    pass


class LengthMismatch(DataError):
    pass


class WeekRangeMismatch(DataError):
    pass


class EmptySeries(DataError):
    pass


class UnknownAttribute(DataError):
    pass


class ConfigError(DataError):
    pass


class DivergenceError(GradEpiError):
    """Loss became non-finite during calibration; the CLI maps this to exit 3."""

    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss
