"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""


class BiochainError(Exception):
    code = "ERROR"


class InputError(BiochainError):
    """Problems with files or instance data supplied by the user."""


class InstanceIOError(InputError):
    code = "IO_ERROR"


class ParseError(InputError):
    code = "PARSE_ERROR"

    def __init__(self, message, file=None, line=None):
        self.file = file
        self.line = line
        where = ""
        if file is not None:
            where = f"{file}:{line}: " if line is not None else f"{file}: "
        super().__init__(where + message)


class SchemaError(ParseError):
    code = "SCHEMA_ERROR"


class InstanceValidationError(InputError):
    code = "VALIDATION_ERROR"

    def __init__(self, report):
        self.report = report
        lines = [f"{f.code} {f.entity}: {f.message}" for f in report.findings]
        super().__init__("instance failed validation:\n  " + "\n  ".join(lines))


class ParamError(InputError):
    code = "PARAM_ERROR"


class EpsilonError(BiochainError):
    code = "EPSILON_NEGATIVE"


class NumericalBreakdown(BiochainError):
    code = "NUMERICAL_BREAKDOWN"


class TooManyBinaries(BiochainError):
    code = "TOO_MANY_BINARIES"


class InfeasibleError(BiochainError):
    code = "INFEASIBLE"


class LimitReached(BiochainError):
    """A time or node limit stopped the search before any plan was found."""

    code = "LIMIT_REACHED"

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status
