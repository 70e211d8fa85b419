"""Exception hierarchy shared by all fissurescan modules."""


class ScanError(Exception):
    """Base class for all errors raised by fissurescan."""


class DomainError(ScanError, ValueError):
    """A parameter lies outside its mathematical domain."""


class DegenerateWindowError(DomainError):
    """A scan-window segment contains no pixels at the requested resolution."""


class WindowTooLargeError(DomainError):
    """The scan window does not fit inside the image at any anchor."""


class ConfigError(ScanError, ValueError):
    """Inconsistent or missing configuration (e.g. a threshold for another T)."""


class DataError(ScanError, ValueError):
    """Input data cannot be used (non-square, colour, non-finite, ...)."""


class CacheLoadError(ScanError, OSError):
    """The threshold cache file exists but cannot be parsed."""
