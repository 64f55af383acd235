"""Error hierarchy shared by every earlock module."""


class EarlockError(Exception):
    """Base class for all earlock failures."""


class ValidationError(EarlockError, ValueError):
    """Invalid argument, configuration or input shape."""


class DimensionMismatchError(ValidationError):
    pass


class EmptyMaskError(ValidationError):
    pass


class ImageTooSmallError(ValidationError):
    pass


class EmptyFeatureSetError(ValidationError):
    pass


class ZeroMassError(ValidationError):
    """A vector with no positive element cannot become a mass function."""


class ImageDecodeError(EarlockError):
    """Missing, truncated or unsupported raster file."""


class FitError(EarlockError):
    """Mixture fitting cannot proceed (infeasible codebook, singular covariance)."""


class SegmentationError(EarlockError):
    pass


class TotalConflictError(EarlockError):
    """Dempster's normalizer vanished: the two mass functions share no focal element."""


class ProtocolError(EarlockError):
    """Enrollment / evaluation protocol violated."""


class TemplateStoreError(EarlockError):
    pass
