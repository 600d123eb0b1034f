class SSGError(ValueError):
    """Base class for every error raised by this package."""


class ContractViolation(SSGError):
    """A precondition of a public operation was not met."""


class FormatError(SSGError):
    """A file is malformed: bad magic, truncated record, inconsistent layout."""


class ValidationError(SSGError):
    """A well-formed input carries values that break a data invariant."""
