"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for invalid models, estimator settings or experiment configs."""


class DomainError(ValueError):
    """Raised when an operation is called outside its mathematical domain."""


class LPError(RuntimeError):
    """Raised when the simplex solver cannot produce an optimal solution."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
