class CrossworldError(Exception):
    """Base class for every error raised by this package."""


class InputError(CrossworldError, ValueError):
    """Raised for unusable data: empty or non-finite arrays, dimension
    mismatches, non-binary treatment columns, missing CSV columns.
    """


class DomainError(CrossworldError, ValueError):
    """Raised when a value lies outside the mathematical domain of an
    operation, e.g. a negative band width or a correlation outside [-1, 1].
    """


class ConfigurationError(CrossworldError, ValueError):
    """Raised for invalid settings.  `key` holds the dotted path of the
    offending configuration entry when there is one.
    """

    def __init__(self, message: str, key: str | None = None) -> None:
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DiagnosticError(CrossworldError):
    """Raised when a correlation diagnostic cannot be computed, e.g. the
    conditioning window is too sparse or the counterfactuals are missing.
    """

    def __init__(self, message: str, count: int | None = None) -> None:
        self.count = count
        super().__init__(message)
