"""Exception hierarchy. The CLI maps these onto exit codes."""


class VitalTrajError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VitalTrajError, ValueError):
    """Invalid configuration or parameter combination."""


class DataError(VitalTrajError, ValueError):
    """Input data violates a contract (bad values, bad shapes, bad files)."""


class DimensionError(DataError):
    """Sequences or epochs have incompatible shapes."""


class DegenerateChannelError(DataError):
    """A channel has (near) zero variance and cannot be normalized."""

    def __init__(self, channel, std):
        super().__init__(f"channel {channel!r} is degenerate (std={std:.3g})")
        self.channel = channel
        self.std = std


class CorruptionError(DataError):
    """A persisted artifact failed an integrity check."""
