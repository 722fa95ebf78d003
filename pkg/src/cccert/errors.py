"""Exception types shared across the package."""


class CCError(Exception):
    """Base class for package-specific failures."""


class FormatError(CCError):
    """Malformed weight file or dataset file."""


class BridgeError(CCError):
    """Failure in the external-classifier wire protocol."""


class NumericError(CCError):
    """Computation left the representable range."""
