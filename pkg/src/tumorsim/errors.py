"""Exception types; each maps to one CLI exit code."""


class TumorSimError(Exception):
    exit_code = 1


class ConfigError(TumorSimError, ValueError):
    """Malformed or inconsistent configuration."""

    exit_code = 1


class NumericalError(TumorSimError, RuntimeError):
    """Invariant breach, non-finite state or solver failure."""

    exit_code = 2


class InvariantViolation(NumericalError):
    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations or []


class SolverError(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class OutputError(TumorSimError, OSError):
    exit_code = 3
