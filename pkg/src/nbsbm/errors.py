"""Error taxonomy shared by the library and the CLI exit codes."""


class ValidationError(ValueError):
    """Malformed input or parameters (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """An iterative or factorization-based computation failed (CLI exit code 3)."""
