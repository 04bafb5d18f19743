"""Shared exception types."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class NumericError(ArithmeticError):
    """Non-finite values appeared during a forward computation."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite values in operation '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SamplerDivergenceError(RuntimeError):
    """A sampling chain left the stable region."""

    def __init__(self, step: int, max_abs: float):
        self.step = step
        super().__init__(f"sampler diverged at step {step}: max |v| = {max_abs:.3e}")


class GenerationError(RuntimeError):
    """Dataset generation could not satisfy its constraints."""


class ParseError(ValueError):
    """A serialized artifact is malformed."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class VersionError(ValueError):
    """A serialized artifact carries an unsupported format version."""


class ConfigError(ValueError):
    """A run configuration document failed validation."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key '{key}': {message}")
