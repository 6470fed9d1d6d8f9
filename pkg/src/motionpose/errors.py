"""Exception types raised across the package."""


class MotionPoseError(Exception):
    """Base class for all library errors."""


class NonPositiveDepth(MotionPoseError):
    """A point lies behind or on the camera plane."""


class FrustumRejectionExceeded(MotionPoseError):
    pass


class NotDetected(MotionPoseError):
    """Decoding found no keypoint (all-zero heatmap)."""


class DimensionMismatch(MotionPoseError, ValueError):
    pass


class ImageTooSmall(MotionPoseError, ValueError):
    pass


class TrackingLost(MotionPoseError):
    """Lucas-Kanade could not track the queried point."""


class InsufficientPoints(MotionPoseError, ValueError):
    pass


class DegenerateConfiguration(MotionPoseError):
    pass


class NoConsensus(MotionPoseError):
    pass


class EmptyKeypoints(MotionPoseError, ValueError):
    pass


class EmptyInput(MotionPoseError, ValueError):
    pass


class DegenerateGroundTruthTranslation(MotionPoseError, ValueError):
    pass


class MalformedFile(MotionPoseError):
    pass


class ChannelCountMismatch(MotionPoseError):
    pass


class MissingMeta(MotionPoseError, FileNotFoundError):
    pass


class SchemaViolation(MotionPoseError, ValueError):
    pass


class BboxInvariantViolation(MotionPoseError, ValueError):
    pass


class ConfigError(MotionPoseError, ValueError):
    pass
