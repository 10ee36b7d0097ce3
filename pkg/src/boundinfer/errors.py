"""Exception hierarchy shared by every module."""


class BoundInferError(Exception):
    """Base class for all domain failures (CLI exit status 1)."""


class NetworkParseError(BoundInferError):
    """Malformed network text. Carries the line/column when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class NetworkValidationError(BoundInferError):
    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


class InconsistentEvidenceError(BoundInferError):
    """Evidence has zero probability under the network."""


class OracleCapExceeded(BoundInferError):
    """Network too large for brute-force joint enumeration."""
