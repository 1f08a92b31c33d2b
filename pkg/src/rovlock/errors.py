"""Exception types shared across the package.

Everything raised on purpose derives from :class:`RovLockError` so callers
can catch one base type.  Plain I/O failures are left to the builtin
``OSError`` family.
"""


class RovLockError(Exception):
    """Base class for all rovlock errors."""


class InvalidChannelCount(RovLockError):
    """Frame has a channel count other than 1 or 3."""


class InvalidSize(RovLockError):
    """A size argument (window, patch, map) is out of range."""


class SizeMismatch(RovLockError):
    """Two arrays that must share a shape do not."""


class OutOfBounds(RovLockError):
    """A rectangle or point falls outside the frame."""


class InvalidConfig(RovLockError):
    """Tracker configuration value out of range."""


class InvalidRoi(RovLockError):
    """Initial region is degenerate or does not intersect the frame."""


class NotInitialized(RovLockError):
    """Tracker used before init()."""


class NotTrained(RovLockError):
    """Model queried before any training data was supplied."""


class DegenerateSamples(RovLockError):
    """A training batch is unusable (e.g. single-class or empty)."""


class DegenerateSampling(RovLockError):
    """Sampling produced no usable candidates (e.g. empty negative bag)."""


class ZeroVariance(RovLockError):
    """A patch with no variance where contrast is required."""


class TargetNotVisible(RovLockError):
    """Simulated target is behind or too close to the camera."""


class InvalidSpec(RovLockError):
    """Experiment specification rejected by validation."""


class EmptyLog(RovLockError):
    """Run log holds no scorable frames."""


class MalformedDataset(RovLockError):
    """Replay dataset directory fails structural validation."""
