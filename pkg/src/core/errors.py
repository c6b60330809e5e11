"""Exception types raised by the solver library."""


class SolverError(Exception):
    """Base class for every failure raised by ``src.core`` and ``src.studies``."""


class InvalidSpecError(SolverError, ValueError):
    pass


class DomainError(SolverError, ValueError):
    pass


class AssemblyError(SolverError):
    def __init__(self, message: str, triangle: int | None = None):
        super().__init__(message)
        self.triangle = triangle


class EvaluationError(SolverError):
    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class SingularEvaluationError(SolverError):
    pass


class DivergedError(SolverError):
    """Newton (or monotone) iteration stopped before reaching the tolerance.

    ``last`` holds the last iterate (a Field) and ``report`` the SolveReport,
    so callers can inspect or warm-start from them.
    """

    def __init__(self, message: str, last=None, report=None):
        super().__init__(message)
        self.last = last
        self.report = report


class InternalError(SolverError):
    pass


class PreconditionError(SolverError):
    pass


class FitFailure(SolverError):
    pass


class UnsupportedError(SolverError):
    pass


class OracleFailure(SolverError):
    pass


class MapSingularityError(SolverError):
    pass


class ConfigError(SolverError):
    pass
