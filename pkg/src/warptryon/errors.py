"""Exception types; each carries the CLI exit code it maps to."""


class WarpTryOnError(Exception):
    exit_code = 1


class ContractViolation(WarpTryOnError, ValueError):
    """Shape, range or argument precondition broken by the caller."""

    exit_code = 1


class ManifestError(ContractViolation):
    def __init__(self, line, message):
        super().__init__(f"manifest line {line}: {message}")
        self.line = line


class DivergenceError(WarpTryOnError, FloatingPointError):
    """A loss term became non-finite during training."""

    exit_code = 3

    def __init__(self, term, value=float("nan")):
        super().__init__(f"loss term '{term}' is not finite ({value})")
        self.term = term


class CheckpointError(WarpTryOnError):
    exit_code = 2
