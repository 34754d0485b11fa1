"""Exception types shared across the package."""


class ParseError(ValueError):
    """Malformed input file (bad header, non-numeric field, truncated body)."""


class StructureError(ValueError):
    """Input parsed but violates structural constraints (bad index, asymmetry)."""


class ShapeError(ValueError):
    """Tensor shape incompatible with the layer or operation it was fed to."""
