"""Exception types raised by gridrisk."""

from __future__ import annotations


class GridRiskError(ValueError):
    """Base class for all structured errors in this package."""


# network validation
class Disconnected(GridRiskError):
    def __init__(self, components: list[list[str]]):
        self.components = components
        parts = "; ".join("{" + ", ".join(c) + "}" for c in components)
        super().__init__(f"network is disconnected, components: {parts}")


class DuplicateLine(GridRiskError):
    pass


class NonPositiveParameter(GridRiskError):
    pass


class BadSlackIndex(GridRiskError):
    pass


# linear algebra
class MultipleZeroEigenvalues(GridRiskError):
    pass


class NotSymmetric(GridRiskError):
    pass


class NotPSD(GridRiskError):
    pass


# regions
class EstimatorRequired(GridRiskError):
    pass


class BasePointOutside(GridRiskError):
    pass


class NonFiniteBoundary(GridRiskError):
    pass


# case input
class MissingBlock(GridRiskError):
    pass


class MalformedRow(GridRiskError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(where + message)


class ZeroReactance(GridRiskError):
    pass


class SchemaViolation(GridRiskError):
    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


class DimensionMismatch(GridRiskError):
    pass


class ZeroMeanFlow(GridRiskError):
    pass


class MissingRateA(GridRiskError):
    pass
