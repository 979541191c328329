"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input failed a structural or contract check."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class CheckpointError(ValidationError):
    """A checkpoint file is malformed, truncated, or of an unknown version."""
