class RstabError(Exception):
    """Base class for library errors."""


class DomainError(RstabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ConfigError(RstabError):
    """Malformed configuration or input file."""


class PreconditionError(RstabError):
    """A theorem hypothesis is not met for the requested audit."""
