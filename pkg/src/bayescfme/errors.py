class InputError(ValueError):
    """Invalid arguments: bad shapes, empty sets, out-of-range settings."""


class NumericalError(ArithmeticError):
    """A factorization failed even at the largest permitted jitter."""

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
                               for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)
