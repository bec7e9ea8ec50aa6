class SoftQDError(RuntimeError):
    """Base class for all softqd errors."""


class ConfigError(SoftQDError):
    """Configuration validation or loading error."""


class DomainError(SoftQDError):
    """Raised when a domain name cannot be resolved to a problem factory."""


class RejectedInputError(SoftQDError, ValueError):
    """Raised when an operation's precondition is violated by its input."""


class UnsupportedDimensionError(RejectedInputError):
    """Raised when a behavior dimension is outside what an operation supports."""


class EvaluationError(SoftQDError):
    """Raised when a problem returns a non-finite quality or descriptor."""

    def __init__(self, message: str, index: int) -> None:
        super().__init__(f"{message} (solution index {index})")
        self.index = index


class GradientError(SoftQDError):
    """Raised when a SQUAD gradient term is non-finite."""

    def __init__(self, index: int, term: str) -> None:
        super().__init__(f"Non-finite {term} gradient for solution index {index}")
        self.index = index
        self.term = term


class NumericalError(SoftQDError):
    """Raised when a linear-algebra routine fails its accuracy checks."""
