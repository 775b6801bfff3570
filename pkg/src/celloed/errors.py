"""Exception types shared across the package."""


class CellOedError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CellOedError):
    """An argument lies outside its physically meaningful domain."""


class SingularityError(CellOedError):
    """A surface concentration reached or crossed its bounds, so the
    exchange-current square root (and everything downstream) degenerates."""


class UsageError(CellOedError):
    """An API was called out of sequence (e.g. stepping a finished episode)."""


class LoadError(CellOedError):
    """A config, table, or profile file failed validation on load."""
