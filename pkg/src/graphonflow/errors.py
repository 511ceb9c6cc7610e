"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numeric/domain problems with 3 and inner-solver failures with 4.
"""


class GraphonError(Exception):
    """Base class for all library errors."""


class ConfigError(GraphonError, ValueError):
    """Invalid parameters, files or option combinations."""


class KernelFormatError(ConfigError):
    """A kernel or graph file could not be parsed.

    ``line`` and ``column`` are 1-based and point at the offending token
    when known.
    """

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class SizeLimitError(ConfigError):
    """A kernel or permutation search exceeds a configured size cap."""


class ComplexityError(ConfigError):
    """A motif is too large for exact enumeration and has no fast path."""


class DomainError(GraphonError, ValueError):
    """A functional was evaluated outside its effective domain."""

    def __init__(self, message, index=None, value=None):
        self.index = index
        self.value = value
        super().__init__(message)


class NonConvergenceError(GraphonError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""
