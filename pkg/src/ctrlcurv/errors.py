"""Exception hierarchy.

Every failure raised by the library derives from :class:`ControlGeometryError`;
the CLI maps these onto exit codes.
"""

from __future__ import annotations


class ControlGeometryError(Exception):
    """Base class for all library errors."""


class DefinitionError(ControlGeometryError):
    """Invalid system definition (parse, identifier, domain, family)."""


class ExpressionSyntaxError(DefinitionError):
    def __init__(self, message: str, source: str = "", pos: int = 0):
        line = source.count("\n", 0, pos) + 1
        col = pos - (source.rfind("\n", 0, pos) + 1) + 1
        self.line, self.column = line, col
        self.source = source
        super().__init__(f"{message} at line {line}, column {col}")


class UnknownIdentifier(ExpressionSyntaxError):
    pass


class DomainError(DefinitionError):
    pass


class UnknownFamily(DefinitionError):
    pass


class WrongFamily(DefinitionError):
    pass


class RegularityError(ControlGeometryError):
    """A regularity assumption fails at the point of evaluation."""


class SingularBasis(RegularityError):
    """f and df/du are (numerically) parallel: on or near the abnormal locus."""


class NonConvex(RegularityError):
    """The strong convexity assumption fails."""


class NoRoot(ControlGeometryError):
    pass


class VerticalityViolated(ControlGeometryError):
    pass


class DerivativeUnavailable(ControlGeometryError):
    pass


class EvaluationFailed(ControlGeometryError):
    pass


class StepUnderflow(ControlGeometryError):
    pass


class InversionFailed(ControlGeometryError):
    pass


class ChartSingular(ControlGeometryError):
    pass


class NewtonFailed(ControlGeometryError):
    pass


class RootFailed(ControlGeometryError):
    pass


class NonPositiveArgument(ControlGeometryError):
    pass


class NoConvergence(ControlGeometryError):
    pass
