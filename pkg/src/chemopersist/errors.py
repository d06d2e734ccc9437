"""Exception hierarchy shared across the package."""


class ChemoPersistError(Exception):
    """Base class for all package errors."""


class EvaluationOutOfRange(ChemoPersistError):
    pass


class InvalidSpec(ChemoPersistError):
    pass


class ConfigError(ChemoPersistError):
    """Bad configuration. ``field`` and ``line`` point at the offending entry when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.message = message


class HypothesisViolated(ChemoPersistError):
    pass


class EmptyConstantTable(ChemoPersistError):
    pass


class NotConstantCoefficients(ChemoPersistError):
    pass


class DegenerateDenominator(ChemoPersistError):
    pass


class PreconditionViolated(ChemoPersistError):
    pass


class SolverError(ChemoPersistError):
    """Runtime failure inside the time stepper."""


class PositivityViolation(SolverError):
    pass


class NonFiniteValue(SolverError):
    pass


class BudgetExceeded(ChemoPersistError):
    pass


class InsufficientTail(ChemoPersistError):
    pass
