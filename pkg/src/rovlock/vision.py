"""Image primitives shared by every tracker.

Frames are plain numpy arrays: ``(H, W)`` grayscale or ``(H, W, 3)`` RGB,
float valued in ``[0, 1]``.  All geometry is pixel-center based: integer
coordinate ``(x, y)`` lands on the center of pixel ``x`` in row ``y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidChannelCount, InvalidSize, OutOfBounds, SizeMismatch

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def to_gray(frame: np.ndarray) -> np.ndarray:
    """Collapse an RGB frame to luminance; grayscale passes through."""
    if frame.ndim == 2:
        return frame
    if frame.ndim == 3 and frame.shape[2] == 1:
        return frame[:, :, 0]
    if frame.ndim == 3 and frame.shape[2] == 3:
        r, g, b = GRAY_WEIGHTS
        return r * frame[:, :, 0] + g * frame[:, :, 1] + b * frame[:, :, 2]
    raise InvalidChannelCount(f"expected 1 or 3 channels, got shape {frame.shape}")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, ``(x, y)`` top-left corner, sizes in pixels."""

    x: float
    y: float
    w: float
    h: float

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def moved_to_center(self, cx: float, cy: float) -> "BBox":
        return BBox(cx - self.w / 2.0, cy - self.h / 2.0, self.w, self.h)

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)

    def scaled_about_center(self, sx: float, sy: float | None = None) -> "BBox":
        sy = sx if sy is None else sy
        w, h = self.w * sx, self.h * sy
        return BBox(self.cx - w / 2.0, self.cy - h / 2.0, w, h)

    def inflated(self, factor: float) -> "BBox":
        """Box with the same center and sizes multiplied by ``factor``."""
        return self.scaled_about_center(factor)

    def rounded(self) -> tuple[int, int, int, int]:
        """Integer (x, y, w, h) with at least 1 px on a side."""
        x, y = int(round(self.x)), int(round(self.y))
        w, h = max(1, int(round(self.w))), max(1, int(round(self.h)))
        return x, y, w, h

    def clipped(self, frame_w: int, frame_h: int) -> "BBox":
        """Translate the box (size preserved) so it lies inside the frame."""
        x = min(max(self.x, 0.0), max(0.0, frame_w - self.w))
        y = min(max(self.y, 0.0), max(0.0, frame_h - self.h))
        return BBox(x, y, self.w, self.h)

    def intersection_area(self, other: "BBox") -> float:
        iw = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        ih = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        if iw <= 0.0 or ih <= 0.0:
            return 0.0
        return iw * ih

    def iou(self, other: "BBox") -> float:
        inter = self.intersection_area(other)
        union = self.area + other.area - inter
        return inter / union if union > 0.0 else 0.0


# ---------------------------------------------------------------------------
# integral images
# ---------------------------------------------------------------------------

def integral_image(img: np.ndarray) -> np.ndarray:
    """Summed-area table with a zero first row/column, shape ``(H+1, W+1)``."""
    if img.ndim != 2:
        raise InvalidChannelCount("integral_image expects a single-channel image")
    ii = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    np.cumsum(img, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    return ii


def rect_sum(ii: np.ndarray, x, y, w, h):
    """Sum of pixels in the half-open rect ``[x, x+w) x [y, y+h)``.

    Accepts scalars or equally-shaped integer arrays for the four
    coordinates, so callers can score many windows in one shot.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    h = np.asarray(h, dtype=np.int64)
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    if np.any(x < 0) or np.any(y < 0) or np.any(x + w > W) or np.any(y + h > H):
        raise OutOfBounds("rect outside the image")
    if np.any(w < 0) or np.any(h < 0):
        raise InvalidSize("negative rect size")
    out = ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x]
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear lookup at float coordinates with replicate borders."""
    H, W = img.shape[:2]
    xs = np.clip(xs, 0.0, W - 1.0)
    ys = np.clip(ys, 0.0, H - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def extract_patch(frame: np.ndarray, box: BBox, out_w: int, out_h: int) -> np.ndarray:
    """Resample ``box`` to ``out_w x out_h`` (bilinear, replicate border).

    Output pixel ``j`` samples source coordinate
    ``box.x + (j + 0.5) * box.w / out_w - 0.5`` so that an identity-sized
    request reproduces the source pixels and a 2x downscale averages each
    2x2 block exactly.
    """
    if out_w < 1 or out_h < 1:
        raise InvalidSize("patch size must be positive")
    if not (box.w > 0 and box.h > 0):
        raise InvalidSize("box must have positive size")
    xs = box.x + (np.arange(out_w) + 0.5) * (box.w / out_w) - 0.5
    ys = box.y + (np.arange(out_h) + 0.5) * (box.h / out_h) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    if frame.ndim == 2:
        return bilinear_sample(frame, gx, gy)
    if frame.ndim == 3 and frame.shape[2] in (1, 3):
        planes = [bilinear_sample(frame[:, :, c], gx, gy) for c in range(frame.shape[2])]
        return np.stack(planes, axis=2)
    raise InvalidChannelCount(f"bad frame shape {frame.shape}")


def hann2d(w: int, h: int) -> np.ndarray:
    """Separable raised-cosine window, shape ``(h, w)``, zero on the border."""
    if w < 2 or h < 2:
        raise InvalidSize("window needs at least 2 samples per side")
    return np.outer(np.hanning(h), np.hanning(w))


# ---------------------------------------------------------------------------
# frequency-domain correlation
# ---------------------------------------------------------------------------

def fft_correlate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular cross-correlation of ``a`` against ``b`` via the FFT.

    ``out[dy, dx] = sum a[y, x] * b[y - dy, x - dx]`` (indices wrap), so if
    ``a`` is ``b`` shifted by ``(dx, dy)`` the peak sits at ``(dx, dy)``.
    """
    if a.shape != b.shape:
        raise SizeMismatch(f"{a.shape} vs {b.shape}")
    return np.real(np.fft.ifft2(np.fft.fft2(a) * np.conj(np.fft.fft2(b))))


# ---------------------------------------------------------------------------
# pyramidal Lucas-Kanade point tracking
# ---------------------------------------------------------------------------

POINT_OK = 0
POINT_DIVERGED = 1
POINT_OUT_OF_BOUNDS = 2

LK_MAX_ITERS = 20
LK_CONVERGENCE_PX = 0.01
LK_MIN_EIGENVALUE = 1e-4


@dataclass
class FlowResult:
    """Vectors for a batch of tracked points."""

    points: np.ndarray    # (N, 2) displaced positions
    status: np.ndarray    # (N,) POINT_* codes
    residual: np.ndarray  # (N,) mean squared window difference


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(1, levels):
        prev = pyr[-1]
        if min(prev.shape) < 8:
            break
        h2, w2 = prev.shape[0] // 2, prev.shape[1] // 2
        c = prev[: 2 * h2, : 2 * w2]
        # 2x2 block average, then decimate
        pyr.append(0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2]))
    return pyr


def lk_track_points(
    prev: np.ndarray,
    nxt: np.ndarray,
    points: np.ndarray,
    window: int = 11,
    levels: int = 3,
    max_iters: int = LK_MAX_ITERS,
    eps: float = LK_CONVERGENCE_PX,
) -> FlowResult:
    """Track sparse points from ``prev`` to ``nxt``.

    :param points: (N, 2) array of (x, y) positions inside ``prev``.
    :param window: odd window side used for the normal equations.
    :param levels: pyramid depth (each level halves resolution).

    A point is Diverged when the 2x2 normal matrix at the finest level is
    near-singular or the iteration fails to converge within the cap, and
    OutOfBounds when the displaced point leaves the frame.
    """
    prev = to_gray(prev)
    nxt = to_gray(nxt)
    if prev.shape != nxt.shape:
        raise SizeMismatch(f"{prev.shape} vs {nxt.shape}")
    if window < 3 or window % 2 == 0:
        raise InvalidSize("window must be odd and >= 3")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    H, W = prev.shape
    if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > W - 1) or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > H - 1):
        raise OutOfBounds("input points must start inside the frame")

    pyr_prev = _pyramid(prev, levels)
    pyr_next = _pyramid(nxt, levels)
    n_levels = min(len(pyr_prev), len(pyr_next))
    grads = [np.gradient(p) for p in pyr_prev]  # (gy, gx) per level

    r = window // 2
    off = np.arange(-r, r + 1, dtype=np.float64)
    ox, oy = np.meshgrid(off, off)
    ox = ox.ravel()
    oy = oy.ravel()

    n = pts.shape[0]
    out_pts = np.empty_like(pts)
    status = np.full(n, POINT_OK, dtype=np.int64)
    residual = np.zeros(n, dtype=np.float64)

    for i in range(n):
        px, py = pts[i]
        flow = np.zeros(2)
        ok = True
        for lvl in range(n_levels - 1, -1, -1):
            scale = 2.0 ** lvl
            img_p = pyr_prev[lvl]
            img_n = pyr_next[lvl]
            gy, gx = grads[lvl]
            cx, cy = px / scale, py / scale
            wx = cx + ox
            wy = cy + oy
            tmpl = bilinear_sample(img_p, wx, wy)
            gxs = bilinear_sample(gx, wx, wy)
            gys = bilinear_sample(gy, wx, wy)
            gxx = float(np.dot(gxs, gxs))
            gyy = float(np.dot(gys, gys))
            gxy = float(np.dot(gxs, gys))
            tr_half = 0.5 * (gxx + gyy)
            det = gxx * gyy - gxy * gxy
            min_eig = tr_half - math.sqrt(max(tr_half * tr_half - det, 0.0))
            if min_eig < LK_MIN_EIGENVALUE:
                if lvl == 0:
                    ok = False
                flow *= 2.0
                continue
            inv = np.array([[gyy, -gxy], [-gxy, gxx]]) / det
            converged = False
            for _ in range(max_iters):
                moved = bilinear_sample(img_n, wx + flow[0], wy + flow[1])
                it = moved - tmpl
                b = np.array([np.dot(it, gxs), np.dot(it, gys)])
                step = -inv @ b
                flow += step
                if step[0] * step[0] + step[1] * step[1] < eps * eps:
                    converged = True
                    break
            if lvl == 0:
                if not converged:
                    ok = False
                moved = bilinear_sample(img_n, wx + flow[0], wy + flow[1])
                residual[i] = float(np.mean((moved - tmpl) ** 2))
            else:
                flow *= 2.0
        nx_, ny_ = px + flow[0], py + flow[1]
        out_pts[i] = (nx_, ny_)
        if not ok:
            status[i] = POINT_DIVERGED
        elif not (0.0 <= nx_ <= W - 1 and 0.0 <= ny_ <= H - 1):
            status[i] = POINT_OUT_OF_BOUNDS
    return FlowResult(points=out_pts, status=status, residual=residual)
