"""Deterministic 4-DOF vehicle and underwater scene simulator.

World frame
-----------
The target is a flat textured panel in the plane ``Z = 0`` centered on the
origin.  Axes follow the camera: ``+X`` sway right, ``+Y`` heave down,
``+Z`` surge away from the panel.  The vehicle carries the camera at its
own position ``(x, y, z)`` with yaw ``psi`` about the vertical; at
``psi = 0`` the camera looks straight at the panel.  Consequences of this
convention (documented because trackers and the control loop rely on it):

* vehicle ``+x`` motion moves the target LEFT in the image,
* vehicle ``+y`` motion moves the target UP in the image,
* vehicle ``+z`` motion (away) SHRINKS the projection,
* a small yaw ``d`` shifts the target horizontally by roughly ``focal * d``.

Rendered frames are quantized to 256 intensity levels so a frame exported
as 8-bit PNG reloads bit-identically; trackers therefore see the exact same
pixels live and on replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControlCommand, wrap_angle
from .errors import InvalidConfig, TargetNotVisible
from .vision import BBox, bilinear_sample

AXES = ("x", "y", "z", "yaw")

IMAGE_W = 320
IMAGE_H = 240
FOCAL_PX = 300.0
DT = 1.0 / 15.0

MIN_TARGET_DEPTH = 0.2  # m; closer than this the panel is not renderable


# ---------------------------------------------------------------------------
# plant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantParams:
    """Per-axis rigid-body parameters (x, y, z, yaw order).

    Translational axes: kg, N*s/m and N per unit command.  The yaw entries
    are the rotational analogues (kg*m^2, N*m*s/rad, N*m per unit command).
    """

    mass: tuple[float, float, float, float] = (11.0, 11.0, 11.0, 0.25)
    drag: tuple[float, float, float, float] = (25.0, 25.0, 25.0, 0.9)
    thrust_gain: tuple[float, float, float, float] = (40.0, 40.0, 40.0, 2.0)
    dt: float = DT

    def __post_init__(self):
        if self.dt <= 0.0 or any(m <= 0 for m in self.mass) or any(c < 0 for c in self.drag):
            raise InvalidConfig("plant parameters out of range")


@dataclass(frozen=True)
class RovState:
    """Vehicle pose and body velocities."""

    x: float = 0.0
    y: float = 0.0
    z: float = 1.5
    psi: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    vpsi: float = 0.0

    def position(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.z, self.psi)


def plant_step(
    state: RovState,
    cmd: ControlCommand,
    f_ext: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0),
    params: PlantParams = PlantParams(),
) -> RovState:
    """Semi-implicit Euler step: velocities first, positions with new velocity."""
    pos = [state.x, state.y, state.z, state.psi]
    vel = [state.vx, state.vy, state.vz, state.vpsi]
    u = cmd.as_tuple()
    for i in range(4):
        force = params.thrust_gain[i] * u[i] + f_ext[i] - params.drag[i] * vel[i]
        vel[i] += params.dt * force / params.mass[i]
        pos[i] += params.dt * vel[i]
    return RovState(
        x=pos[0], y=pos[1], z=pos[2], psi=wrap_angle(pos[3]),
        vx=vel[0], vy=vel[1], vz=vel[2], vpsi=vel[3],
    )


# ---------------------------------------------------------------------------
# scene construction
# ---------------------------------------------------------------------------

OBJECT_NAMES = ("structure", "ladder")


def _structure_texture() -> np.ndarray:
    """Sparse low-contrast truss: a few beams on a mottled slab."""
    h, w = 96, 128
    rng = np.random.default_rng(101)
    tex = np.full((h, w), 0.30)
    tex += 0.03 * _upsample(rng.standard_normal((6, 8)), h, w)
    tex += 0.015 * rng.standard_normal((h, w))
    # horizontal chords
    tex[int(0.16 * h) : int(0.26 * h), :] = 0.52
    tex[int(0.74 * h) : int(0.84 * h), :] = 0.50
    # vertical posts
    tex[:, int(0.05 * w) : int(0.15 * w)] = 0.48
    tex[:, int(0.45 * w) : int(0.55 * w)] = 0.55
    tex[:, int(0.85 * w) : int(0.95 * w)] = 0.47
    # faint joint plates where members cross
    tex[int(0.14 * h) : int(0.28 * h), int(0.43 * w) : int(0.57 * w)] += 0.06
    tex += 0.01 * rng.standard_normal((h, w))  # biofouling speckle
    return np.clip(tex, 0.0, 1.0)


def _ladder_texture() -> np.ndarray:
    """High-contrast ladder: bright rails and rungs, unevenly weathered.

    Rung brightness, thickness and spacing are all jittered, the rails are
    studded with bolt heads at staggered heights and a few rungs carry dark
    fouling patches.  A perfectly regular ladder would be vertically
    self-similar (every rung looks the same one period over), which makes
    sub-pixel vertical localization ill-posed for any correlation tracker.
    """
    h, w = 192, 96
    rng = np.random.default_rng(202)
    tex = np.full((h, w), 0.15) + 0.03 * _upsample(rng.standard_normal((12, 6)), h, w)
    streaks = 0.10 * _upsample(rng.standard_normal((16, 1)), h, 1)
    for c0, c1 in ((0.07, 0.18), (0.82, 0.93)):
        tex[:, int(c0 * w) : int(c1 * w)] = 0.78 + streaks
        streaks = np.roll(streaks, h // 3, axis=0)
    jitter = rng.uniform(-0.04, 0.04, size=7)
    gain = rng.uniform(0.55, 0.95, size=7)
    thick = rng.uniform(0.035, 0.06, size=7)
    for k in range(7):
        r0 = 0.06 + 0.14 * k + jitter[k]
        rr0, rr1 = int(r0 * h), int((r0 + thick[k]) * h)
        # rungs are lit from above: bright top face shading darker downward
        shade = np.linspace(1.0, 0.6, max(1, rr1 - rr0))[:, None]
        tex[rr0:rr1, int(0.07 * w) : int(0.93 * w)] = gain[k] * shade
        # bolt heads where the rung meets each rail, staggered a little
        for cx in (0.125, 0.875):
            bc = int(cx * w) + int(rng.integers(-3, 4))
            br = min(h - 3, rr1 + int(rng.integers(0, 4)))
            tex[br - 2 : br + 3, bc - 2 : bc + 3] = 1.0
        if k % 3 == 1:  # dark fouling patch on this rung
            fx = int(rng.uniform(0.25, 0.65) * w)
            tex[rr0:rr1, fx : fx + 10] = 0.25
    tex += 0.015 * rng.standard_normal((h, w))
    return np.clip(tex, 0.0, 1.0)


def _upsample(lowres: np.ndarray, h: int, w: int) -> np.ndarray:
    ys = np.linspace(0, lowres.shape[0] - 1, h)
    xs = np.linspace(0, lowres.shape[1] - 1, w)
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(lowres, gx, gy)


@dataclass
class Scene:
    """Static description of one benchmark object plus cached background."""

    name: str
    texture: np.ndarray
    size_m: tuple[float, float]           # physical (width, height) of the panel
    image_size: tuple[int, int] = (IMAGE_W, IMAGE_H)
    focal_px: float = FOCAL_PX
    background: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.background is None:
            w, h = self.image_size
            rng = np.random.default_rng(11)
            grad = np.linspace(0.55, 0.22, h)[:, None] * np.ones((1, w))
            grad += 0.04 * _upsample(rng.standard_normal((6, 8)), h, w)
            self.background = np.clip(grad, 0.0, 1.0)


def make_scene(name: str) -> Scene:
    if name == "structure":
        return Scene(name=name, texture=_structure_texture(), size_m=(0.50, 0.40))
    if name == "ladder":
        # 0.40 x 0.56 m section: at the 1.5 m standoff the 2x search region
        # around it still fits inside the frame
        return Scene(name=name, texture=_ladder_texture(), size_m=(0.40, 0.56))
    raise InvalidConfig(f"unknown object {name!r} (expected one of {OBJECT_NAMES})")


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def _camera_basis(psi: float):
    s, c = math.sin(psi), math.cos(psi)
    x_c = np.array([c, 0.0, -s])
    y_c = np.array([0.0, 1.0, 0.0])
    z_c = np.array([-s, 0.0, -c])
    return x_c, y_c, z_c


def project_points(scene: Scene, state: RovState, pts_world: np.ndarray) -> np.ndarray:
    """World points (N, 3) to image pixel coordinates (N, 2)."""
    cam = np.array([state.x, state.y, state.z])
    x_c, y_c, z_c = _camera_basis(state.psi)
    rel = pts_world - cam
    qx, qy, qz = rel @ x_c, rel @ y_c, rel @ z_c
    if np.any(qz < MIN_TARGET_DEPTH):
        raise TargetNotVisible(f"target depth below {MIN_TARGET_DEPTH} m")
    w, h = scene.image_size
    u = scene.focal_px * qx / qz + w / 2.0
    v = scene.focal_px * qy / qz + h / 2.0
    return np.stack([u, v], axis=1)


def true_target_box(scene: Scene, state: RovState) -> BBox:
    """Tight axis-aligned bound of the projected panel corners."""
    sx, sy = scene.size_m
    corners = np.array([
        [-sx / 2, -sy / 2, 0.0],
        [sx / 2, -sy / 2, 0.0],
        [sx / 2, sy / 2, 0.0],
        [-sx / 2, sy / 2, 0.0],
    ])
    uv = project_points(scene, state, corners)
    x0, y0 = uv.min(axis=0)
    x1, y1 = uv.max(axis=0)
    return BBox(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


def render_frame(
    scene: Scene,
    state: RovState,
    noise: "VisualNoiseParams | None" = None,
    seed: int = 0,
    frame_index: int = 0,
) -> tuple[np.ndarray, BBox]:
    """Render one grayscale frame; returns (frame, true target box).

    Deterministic: identical arguments produce bit-identical frames.
    """
    w, h = scene.image_size
    frame = scene.background.copy()
    box = true_target_box(scene, state)

    # inverse-warp the panel texture over the projected region
    x0 = max(0, int(math.floor(box.x)))
    y0 = max(0, int(math.floor(box.y)))
    x1 = min(w, int(math.ceil(box.x + box.w)) + 1)
    y1 = min(h, int(math.ceil(box.y + box.h)) + 1)
    if x1 > x0 and y1 > y0:
        us, vs = np.meshgrid(np.arange(x0, x1, dtype=np.float64),
                             np.arange(y0, y1, dtype=np.float64))
        a = (us - w / 2.0) / scene.focal_px
        b = (vs - h / 2.0) / scene.focal_px
        s, c = math.sin(state.psi), math.cos(state.psi)
        dxr = a * c - s
        dyr = b
        dzr = -a * s - c
        t_hit = np.where(dzr < 0.0, -state.z / np.where(dzr < 0.0, dzr, -1.0), np.inf)
        px = state.x + t_hit * dxr
        py = state.y + t_hit * dyr
        sx, sy = scene.size_m
        th, tw = scene.texture.shape
        tx = (px + sx / 2.0) / sx * tw - 0.5
        ty = (py + sy / 2.0) / sy * th - 0.5
        inside = (
            np.isfinite(t_hit)
            & (px >= -sx / 2.0) & (px <= sx / 2.0)
            & (py >= -sy / 2.0) & (py <= sy / 2.0)
        )
        if np.any(inside):
            vals = bilinear_sample(scene.texture, tx[inside], ty[inside])
            sub = frame[y0:y1, x0:x1]
            sub[inside] = vals
    if noise is not None:
        frame = apply_visual_disturbance(frame, box, noise, seed, frame_index)
    np.clip(frame, 0.0, 1.0, out=frame)
    # camera quantization: exactly the levels an 8-bit export preserves
    np.round(frame * 255.0, out=frame)
    frame /= 255.0
    return frame, box


# ---------------------------------------------------------------------------
# visual disturbances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VisualNoiseParams:
    """Bubble plume, sweeping pole occluder and turbidity settings."""

    bubble_rate: float = 6.0          # expected bubbles per frame
    bubble_radius: tuple[float, float] = (2.0, 7.0)
    bubble_alpha: float = 0.35
    occluder_width: float = 34.0      # px, full-height dark bar; 0 disables
    occluder_period_s: float = 5.0
    occluder_gain: float = 0.6        # multiplier under the bar
    turbidity: float = 0.85           # contrast multiplier, 1 = clear water
    fps: float = 15.0

    def __post_init__(self):
        if not (0.0 < self.turbidity <= 1.0):
            raise InvalidConfig("turbidity must be in (0, 1]")
        if self.bubble_rate < 0 or self.occluder_width < 0:
            raise InvalidConfig("negative noise parameter")


def apply_visual_disturbance(
    frame: np.ndarray,
    target_box: BBox,
    params: VisualNoiseParams,
    seed: int,
    frame_index: int,
) -> np.ndarray:
    """Overlay bubbles and the sweeping pole, then wash out contrast.

    Bubble draws depend only on ``(seed, frame_index)`` so a frame can be
    reproduced in isolation.
    """
    out = frame.copy()
    h, w = out.shape
    rng = np.random.default_rng([seed, frame_index])

    n_bubbles = int(rng.poisson(params.bubble_rate))
    r_lo, r_hi = params.bubble_radius
    for _ in range(n_bubbles):
        bx = rng.uniform(0, w)
        by = rng.uniform(0, h)
        br = rng.uniform(r_lo, r_hi)
        x0, x1 = max(0, int(bx - br - 1)), min(w, int(bx + br + 2))
        y0, y1 = max(0, int(by - br - 1)), min(h, int(by + br + 2))
        if x0 >= x1 or y0 >= y1:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        d2 = (xs - bx) ** 2 + (ys - by) ** 2
        prof = np.clip(1.0 - d2 / (br * br), 0.0, 1.0)
        alpha = params.bubble_alpha * prof
        out[y0:y1, x0:x1] += alpha * (1.0 - out[y0:y1, x0:x1])

    if params.occluder_width > 0:
        t = frame_index / params.fps
        sweep = 0.75 * target_box.w
        cx = target_box.cx + sweep * math.sin(2.0 * math.pi * t / params.occluder_period_s)
        half = params.occluder_width / 2.0
        x0 = max(0, int(round(cx - half)))
        x1 = min(w, int(round(cx + half)))
        if x1 > x0:
            out[:, x0:x1] *= params.occluder_gain

    if params.turbidity < 1.0:
        out = 0.5 + (out - 0.5) * params.turbidity
    return out


# ---------------------------------------------------------------------------
# disturbance scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisturbancePulse:
    """Constant external force pulse on one axis.

    ``amplitude`` is the intended free-response peak displacement (m, or rad
    for yaw).  The force applied is ``drag * amplitude / duration``: with
    pure linear drag the terminal displacement of a force pulse equals
    impulse / drag, so the free plant peaks at ``amplitude`` by design.
    """

    t_start: float
    axis: int              # index into AXES
    amplitude: float
    duration: float = 0.8


def pulse_force(pulse: DisturbancePulse, params: PlantParams = PlantParams()) -> float:
    return params.drag[pulse.axis] * pulse.amplitude / pulse.duration


def external_force(
    pulses: list[DisturbancePulse],
    t: float,
    params: PlantParams = PlantParams(),
) -> tuple[float, float, float, float]:
    f = [0.0, 0.0, 0.0, 0.0]
    for p in pulses:
        if p.t_start <= t < p.t_start + p.duration:
            f[p.axis] += pulse_force(p, params)
    return tuple(f)


MODE_NAMES = ("none", "bubbles", "positional")

PULSE_TRANSLATION_M = 0.30
PULSE_YAW_RAD = math.radians(30.0)


def standard_disturbance_script(
    mode: str,
) -> tuple[list[DisturbancePulse], VisualNoiseParams | None]:
    """The benchmark's three run modes.

    ``positional``: eight force pulses 6 s apart, paired +/- per axis, in
    yaw, surge (z), sway (x), heave (y) order; no visual noise.
    ``bubbles``: visual noise only.  ``none``: a quiet run.
    """
    if mode == "none":
        return [], None
    if mode == "bubbles":
        return [], VisualNoiseParams()
    if mode == "positional":
        order = (3, 3, 2, 2, 0, 0, 1, 1)  # yaw, yaw, z, z, x, x, y, y
        pulses = []
        for k, axis in enumerate(order):
            amp = PULSE_YAW_RAD if axis == 3 else PULSE_TRANSLATION_M
            sign = 1.0 if k % 2 == 0 else -1.0
            pulses.append(DisturbancePulse(t_start=4.0 + 6.0 * k, axis=axis, amplitude=sign * amp))
        return pulses, None
    raise InvalidConfig(f"unknown mode {mode!r} (expected one of {MODE_NAMES})")


# Sign convention for closing the loop: deviations are reference-minus-
# current, so a positive command must produce restoring thrust along the
# NEGATIVE body axis.  The bench applies this adapter between controller
# output and plant input.
COMMAND_AXIS_SIGN = -1.0


def adapt_command(cmd: ControlCommand) -> ControlCommand:
    s = COMMAND_AXIS_SIGN
    return ControlCommand(x=s * cmd.x, y=s * cmd.y, z=s * cmd.z, yaw=s * cmd.yaw)
