class FormatError(ValueError):
    """A file does not match the ARTF/ARTV layout (bad magic, truncation, trailing bytes)."""


class ValidationError(ValueError):
    """Inputs are well-formed on disk but violate a domain invariant."""
