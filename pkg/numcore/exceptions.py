from sgswarm.exceptions import SgswarmError


class NumcoreError(SgswarmError):
    pass


class DimensionMismatch(NumcoreError, ValueError):
    """An input or gradient does not match the network's declared dimensions."""


class ShapeMismatch(NumcoreError, ValueError):
    """Parameter, gradient and optimizer-moment shapes disagree."""


class UnknownFormatVersion(NumcoreError):
    pass


class CorruptWeightFile(NumcoreError):
    pass


class NonFiniteParameters(NumcoreError, FloatingPointError):
    """An update produced NaN or Inf parameters."""
