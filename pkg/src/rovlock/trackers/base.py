"""Common tracker surface: lifecycle, result types, configuration.

Every tracker follows the same one-shot protocol: ``init(frame, roi)`` once,
then ``update(frame)`` per frame.  Implementations receive grayscale
float frames and report a :class:`TrackResult`.  Once a tracker reports
``LOST`` it stays lost unless its class opts into recovery (TLD re-detects,
MOSSE pauses and resumes).
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, InvalidRoi, NotInitialized, SizeMismatch
from ..vision import BBox, to_gray

MIN_ROI_SIDE = 8.0


class TrackStatus(enum.Enum):
    TRACKING = "tracking"
    LOST = "lost"


@dataclass(frozen=True)
class TrackResult:
    box: BBox
    confidence: float  # [0, 1]
    status: TrackStatus

    @property
    def tracking(self) -> bool:
        return self.status is TrackStatus.TRACKING


@dataclass(frozen=True)
class TrackerConfig:
    """Fields shared by every tracker; subclasses add their own knobs."""

    patch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 8:
            raise InvalidConfig("patch_size must be at least 8")
        # subclasses declare rate-like fields via _RATE_FIELDS for validation
        for name in getattr(self, "_RATE_FIELDS", ()):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise InvalidConfig(f"{name} must lie in (0, 1], got {v}")
        for name in getattr(self, "_NONNEG_FIELDS", ()):
            if getattr(self, name) < 0.0:
                raise InvalidConfig(f"{name} must be non-negative")


class Tracker(ABC):
    """Base lifecycle handling; subclasses implement _init/_track."""

    kind: str = "?"
    recoverable = False  # may a LOST report be followed by TRACKING again?

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config if config is not None else self.default_config()
        self.rng = np.random.default_rng(self.config.seed)
        self._frame_shape: tuple[int, int] | None = None
        self._last: TrackResult | None = None

    @classmethod
    def default_config(cls) -> TrackerConfig:
        return TrackerConfig()

    # -- public protocol ---------------------------------------------------

    def init(self, frame: np.ndarray, roi: BBox) -> None:
        gray = to_gray(np.asarray(frame, dtype=np.float64))
        h, w = gray.shape
        if not np.isfinite([roi.x, roi.y, roi.w, roi.h]).all():
            raise InvalidRoi("roi must be finite")
        if roi.w < MIN_ROI_SIDE or roi.h < MIN_ROI_SIDE:
            raise InvalidRoi(f"roi sides must be >= {MIN_ROI_SIDE} px")
        if roi.intersection_area(BBox(0, 0, w, h)) <= 0.0:
            raise InvalidRoi("roi does not intersect the frame")
        self._frame_shape = (h, w)
        self._init(gray, roi)
        self._last = TrackResult(roi, 1.0, TrackStatus.TRACKING)

    def update(self, frame: np.ndarray) -> TrackResult:
        if self._frame_shape is None:
            raise NotInitialized(f"{self.kind}: update() before init()")
        gray = to_gray(np.asarray(frame, dtype=np.float64))
        if gray.shape != self._frame_shape:
            raise SizeMismatch(f"frame {gray.shape} vs init {self._frame_shape}")
        if self._last.status is TrackStatus.LOST and not self.recoverable:
            return self._last
        result = self._track(gray)
        self._last = result
        return result

    @property
    def last_result(self) -> TrackResult | None:
        return self._last

    # -- implementation hooks ----------------------------------------------

    @abstractmethod
    def _init(self, gray: np.ndarray, roi: BBox) -> None: ...

    @abstractmethod
    def _track(self, gray: np.ndarray) -> TrackResult: ...


class OracleGroundTruth(Tracker):
    """Perfect tracker: echoes simulator ground truth fed by the harness."""

    kind = "oracle"

    def __init__(self, config: TrackerConfig | None = None):
        super().__init__(config)
        self._truth: BBox | None = None

    def feed_truth(self, box: BBox) -> None:
        self._truth = box

    def _init(self, gray, roi):
        self._truth = roi

    def _track(self, gray):
        if self._truth is None:
            raise NotInitialized("oracle requires ground truth before each update")
        box = self._truth
        self._truth = None  # must be re-fed every frame
        return TrackResult(box, 1.0, TrackStatus.TRACKING)
