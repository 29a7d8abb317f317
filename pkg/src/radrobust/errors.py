"""Exception hierarchy shared by all radrobust modules."""


class RadRobustError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(RadRobustError, ValueError):
    """Input violates a documented precondition or schema."""


class UnsupportedFormat(RadRobustError):
    pass


class CorruptHeader(RadRobustError):
    pass


class IoError(RadRobustError, OSError):
    pass


class RoiLost(RadRobustError):
    """An ROI has no voxels left after a geometric transform."""


class DegenerateGeometry(RadRobustError):
    pass


class ZeroVariance(RadRobustError):
    pass


class TooFewSamples(RadRobustError):
    pass


class ZeroNoise(RadRobustError):
    pass


class MismatchedRoiSets(RadRobustError):
    pass


class MissingShapeColumns(RadRobustError):
    pass


class EmptyUniverse(RadRobustError):
    pass
