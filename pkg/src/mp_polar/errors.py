"""Exception types raised by the mask codec."""


class MpPolarError(Exception):
    """Base class for all library errors."""


class InvalidRayCount(MpPolarError):
    """Ray count is not a positive multiple of 4."""


class DegenerateGeometry(MpPolarError):
    """Polygon has fewer than 3 distinct vertices or non-finite coordinates."""


class DimensionMismatch(MpPolarError):
    """Grids or arrays that must share a shape do not."""


class EmptyMask(MpPolarError):
    """Operation requires at least one set pixel."""


class OutsideObject(MpPolarError):
    """Origin point does not lie on a set pixel of the object mask."""


class EmptyQuadrant(MpPolarError):
    """Requested quadrant contains no set pixels."""


class InvalidDisplacement(MpPolarError):
    """Displacement magnitudes must be nonnegative."""


class InvalidRayLength(MpPolarError):
    """Ray lengths fed to a loss kernel must be strictly positive."""


class ParseError(MpPolarError):
    """Annotation file is not valid JSON."""


class SchemaError(MpPolarError):
    """Annotation file parses but violates the expected schema."""


class NotFound(MpPolarError):
    """Referenced instance or image id does not exist."""
