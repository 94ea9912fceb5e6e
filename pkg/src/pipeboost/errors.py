"""Shared exception types."""


class ProfileError(ValueError):
    """A device profile is malformed or internally inconsistent."""


class MappingError(ValueError):
    """A mapping does not fit its workload or device profile."""


class SearchSpaceError(RuntimeError):
    """An exhaustive enumeration would exceed the configured cap."""
