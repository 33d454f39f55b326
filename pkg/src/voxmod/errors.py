"""Exception types shared across the package."""


class VoxmodError(Exception):
    """Base class for errors raised by this package."""


class DataFormatError(VoxmodError):
    """A file or stream did not match the expected on-disk format."""


class UsageError(VoxmodError):
    """Invalid arguments or configuration supplied by the caller."""
