"""Exception hierarchy shared across the engine."""


class BridgewatchError(Exception):
    """Base class for all engine errors."""


class FrameParseError(BridgewatchError):
    """Line is not valid JSON."""


class FrameSchemaError(BridgewatchError):
    """JSON parsed but a required field is missing or has the wrong shape."""


class FrameDataError(BridgewatchError):
    """Frame payload contains a non-finite or otherwise unusable sample."""


class OrderingError(BridgewatchError):
    """Frames or alerts arrived out of order / overlapping."""


class CalibrationError(BridgewatchError):
    """Sensor metadata or baseline calibration is unusable."""


class NotAtRestError(BridgewatchError):
    """Static vector magnitude is outside the at-rest gravity band."""


class InsufficientDataError(BridgewatchError):
    """Too few samples to compute the requested quantity."""


class AggregationError(BridgewatchError):
    """Aggregation target does not align with the record grid."""


class SpectrumError(BridgewatchError):
    """Segment too short or spectrum degenerate for the requested analysis."""


class ConflictError(BridgewatchError):
    """An append would overwrite an existing record with different bytes."""


class ConfigError(BridgewatchError):
    """Invalid pipeline/service configuration."""
