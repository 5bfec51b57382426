"""Exception types shared across the package."""


class DomainError(ValueError):
    """Invalid mathematical input: non-finite entries, mesh mismatch, bad parameters."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class SolverError(RuntimeError):
    """Internal solver failure that cannot be expressed as a flagged result."""
