"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or extents of the operands are inconsistent.

    Raised with a message naming the offending mode and both extents so
    callers (and the CLI) can report actionable diagnostics.
    """


class RankError(ValueError):
    """A decomposition or layer rank is invalid for the given shapes."""


class ContainerError(ValueError):
    """A tensor container file is malformed (bad header or truncated payload)."""
