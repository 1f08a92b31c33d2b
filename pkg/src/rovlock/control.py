"""Deviation measurement and the PI locking regulator.

The operator freezes a reference box (and reference yaw) at lock-on time.
Each frame the tracker's current box is compared against that reference,
producing one deviation figure per controllable axis:

* ``dx`` / ``dy``  -- half-sum differences of the horizontal / vertical box
  extents, in pixels (sway / heave errors);
* ``ds``  -- size deviation in pixels, standing in for range (surge) error;
* ``dpsi`` -- current yaw minus reference yaw, wrapped to ``(-pi, pi]``.

A per-axis PI law turns deviations into normalized thruster commands in
``[-1, 1]``.  The integral accumulator is clamped (anti-windup) and resets
whenever the lock is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidConfig
from .vision import BBox

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval ``(-pi, pi]``."""
    return math.pi - (math.pi - a) % TWO_PI


@dataclass(frozen=True)
class Deviation:
    dx: float
    dy: float
    ds: float
    dpsi: float


def compute_deviation(ref_box: BBox, cur_box: BBox, ref_yaw: float, cur_yaw: float) -> Deviation:
    """Deviation of the current lock against the frozen reference.

    Horizontal and vertical terms are half-sums of corner + size, the size
    term adds half the width and height differences, and yaw is a wrapped
    difference (current minus reference).
    """
    dx = (ref_box.x + ref_box.w) / 2.0 - (cur_box.x + cur_box.w) / 2.0
    dy = (ref_box.y + ref_box.h) / 2.0 - (cur_box.y + cur_box.h) / 2.0
    ds = (ref_box.w - cur_box.w) / 2.0 + (ref_box.h - cur_box.h) / 2.0
    dpsi = wrap_angle(cur_yaw - ref_yaw)
    return Deviation(dx=dx, dy=dy, ds=ds, dpsi=dpsi)


@dataclass(frozen=True)
class ControlCommand:
    """Normalized per-axis thruster demands, each in ``[-1, 1]``."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.z, self.yaw)


# px axes are gentle; yaw is rad-denominated so its gain is much larger
DEFAULT_KP = (0.004, 0.004, 0.006, 0.8)
DEFAULT_KI = tuple(kp / 50.0 for kp in DEFAULT_KP)


@dataclass(frozen=True)
class PiGains:
    kp: tuple[float, float, float, float] = DEFAULT_KP
    ki: tuple[float, float, float, float] = DEFAULT_KI

    def __post_init__(self):
        for v in (*self.kp, *self.ki):
            if v < 0.0:
                raise InvalidConfig("PI gains must be non-negative")


@dataclass
class PiController:
    """Four-axis PI regulator with clamped integral action.

    The accumulator is the running sum of deviations (no dt weighting); its
    clamp is ``2 / ki`` per axis so the integral term alone can never exceed
    twice the command range.
    """

    gains: PiGains = field(default_factory=PiGains)

    def __post_init__(self):
        self._acc = [0.0, 0.0, 0.0, 0.0]

    def reset(self) -> None:
        self._acc = [0.0, 0.0, 0.0, 0.0]

    @property
    def accumulators(self) -> tuple[float, float, float, float]:
        return tuple(self._acc)

    def step(self, dev: Deviation | None) -> ControlCommand:
        """One control tick.  ``None`` means the lock is lost: the command
        freezes at zero and the accumulators reset."""
        if dev is None:
            self.reset()
            return ControlCommand()
        errs = (dev.dx, dev.dy, dev.ds, dev.dpsi)
        out = []
        for i, (e, kp, ki) in enumerate(zip(errs, self.gains.kp, self.gains.ki)):
            acc = self._acc[i] + e
            if ki > 0.0:
                bound = 2.0 / ki
                acc = min(max(acc, -bound), bound)
            self._acc[i] = acc
            u = kp * e + ki * acc
            out.append(min(max(u, -1.0), 1.0))
        return ControlCommand(*out)
