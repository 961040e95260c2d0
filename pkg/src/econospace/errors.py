"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EconospaceError(Exception):
    exit_code = 1

    def __init__(self, message, *, module=None, operation=None):
        super().__init__(message)
        self.module = module
        self.operation = operation


class ConfigError(EconospaceError):
    """Invalid inputs: domain/grid invariants, parameter invariants, config schema."""

    exit_code = 2

    def __init__(self, message, *, errors=None, **kw):
        super().__init__(message, **kw)
        self.errors = list(errors or [])


class DomainError(ConfigError):
    pass


class NumericError(EconospaceError):
    """Stability violations, degenerate denominators, non-finite data."""

    exit_code = 3


class DegeneracyError(NumericError):
    pass


class StabilityError(NumericError):
    pass
