"""Exceptions raised by the analysis library.

Each family carries the process exit code the CLI reports for it.
"""


class QIFError(Exception):
    exit_code = 1


# --- document errors (exit 2) ---

class ParseError(QIFError):
    exit_code = 2

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ModelReferenceError(QIFError):
    "Raised when a document names a channel, prior, observer or tree it never defines."
    exit_code = 2


# --- validation errors (exit 3) ---

class ValidationError(QIFError):
    exit_code = 3

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SeparatorClash(ValidationError):
    "Raised when the parallel-composition separator already occurs in a component trace."


class DimensionMismatch(ValidationError):
    pass


class DomainMismatch(ValidationError):
    pass


class InfeasibleSupport(ValidationError):
    "Raised when a scheduler row puts mass on a trace that is not an interleaving of its sources."


class RowSumError(ValidationError):
    pass


class Misalignment(ValidationError):
    "Raised when a prior's secrets do not match the channel's."


# --- enumeration guard (exit 4) ---

class SizeGuardExceeded(QIFError):
    exit_code = 4

    def __init__(self, count, ceiling):
        self.count = count
        self.ceiling = ceiling
        super().__init__(f"interleaving enumeration needs {count} merges, ceiling is {ceiling} "
                         f"(raise QIF_SIZE_GUARD to allow it)")


# --- numerical failures (exit 5) ---

class SolverError(QIFError):
    exit_code = 5


class LPInfeasible(SolverError):
    pass


class LPUnbounded(SolverError):
    pass


class IterationLimit(SolverError):
    pass


class NonConvergence(SolverError):

    def __init__(self, lower, upper, iterations):
        self.lower = lower
        self.upper = upper
        self.iterations = iterations
        super().__init__(f"capacity bounds [{lower:.9f}, {upper:.9f}] still apart after {iterations} iterations")
