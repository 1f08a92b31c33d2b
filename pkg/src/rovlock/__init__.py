"""Visual station-keeping toolkit: trackers, locking control, simulator, bench."""

__version__ = "0.1.0"

from .vision import BBox  # noqa: F401
