"""Shared machinery for the correlation-filter trackers (MOSSE, KCF, CSRT).

All three work on a square patch resampled from a padded window around the
target box.  Training regresses the patch onto a centred Gaussian response;
detection correlates the learned filter with a new patch and reads the
displacement off the response peak.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import InvalidSize
from ..vision import BBox, extract_patch, hann2d

EPS = 1e-8            # denominator floor for every spectral division
PSR_STD_FLOOR = 1e-6  # sidelobe deviation floor
PSR_EXCLUSION = 5     # px excluded around the peak on each side

SEARCH_PADDING = 2.0  # padded window side as a multiple of the box side

# anti-alias blur applied before patch resampling, as a fraction of the
# (step - 1) oversampling excess per axis
ANTIALIAS_FACTOR = 0.5


def preprocess(patch: np.ndarray, window: np.ndarray) -> np.ndarray:
    """Log-compress, normalize to zero mean / unit energy, apply window."""
    p = np.log1p(patch)
    p -= p.mean()
    n = np.sqrt(np.sum(p * p))
    if n > 0.0:
        p /= n
    return p * window


def gaussian_peak(w: int, h: int, sigma: float) -> np.ndarray:
    """Desired response: peak 1.0 at the patch center ``(w//2, h//2)``."""
    if w < 1 or h < 1 or sigma <= 0:
        raise InvalidSize("bad response map size")
    xs = np.arange(w) - w // 2
    ys = np.arange(h) - h // 2
    gx, gy = np.meshgrid(xs, ys)
    return np.exp(-(gx * gx + gy * gy) / (2.0 * sigma * sigma))


def response_sigma(w: int, h: int) -> float:
    """Spread of the training response for a ``w x h`` patch."""
    return np.sqrt(w * h) / 16.0


def psr(response: np.ndarray, exclusion: int = PSR_EXCLUSION) -> float:
    """Peak-to-sidelobe ratio with a square exclusion window round the peak."""
    h, w = response.shape
    if h < 11 or w < 11:
        raise InvalidSize("response map must be at least 11x11")
    if exclusion < 0 or 2 * exclusion + 1 >= min(h, w):
        raise InvalidSize("exclusion window swallows the whole map")
    py, px = np.unravel_index(np.argmax(response), response.shape)
    return psr_at(response, int(py), int(px), exclusion)


def psr_at(response: np.ndarray, py: int, px: int, exclusion: int = PSR_EXCLUSION) -> float:
    """PSR with the peak pinned at ``(py, px)`` instead of the global argmax.

    A tracker that knows roughly where its target should be can score the
    response there; a taller peak elsewhere then lowers the score (it lands
    in the sidelobe statistics) instead of inflating it.
    """
    peak = response[py, px]
    mask = np.ones_like(response, dtype=bool)
    mask[max(0, py - exclusion) : py + exclusion + 1,
         max(0, px - exclusion) : px + exclusion + 1] = False
    side = response[mask]
    if side.size == 0:
        return 0.0
    return float((peak - side.mean()) / max(side.std(), PSR_STD_FLOOR))


def zscore_response(response: np.ndarray, exclusion: int = PSR_EXCLUSION) -> np.ndarray:
    """Standardize a response map by its own sidelobe statistics.

    Channels produce responses with very different noise floors; whitening
    each map before summation stops one corrupted channel's sidelobes from
    burying the clean peaks of the others.
    """
    py, px = np.unravel_index(np.argmax(response), response.shape)
    mask = np.ones_like(response, dtype=bool)
    mask[max(0, py - exclusion) : py + exclusion + 1,
         max(0, px - exclusion) : px + exclusion + 1] = False
    side = response[mask]
    if side.size == 0:
        return response
    return (response - side.mean()) / max(float(side.std()), PSR_STD_FLOOR)


def motion_prior(h: int, w: int, flat: float, falloff: float) -> np.ndarray:
    """Centered weighting map: 1 within ``flat`` bins, Gaussian tail beyond.

    Multiplying a response by this before the argmax encodes that the target
    cannot have jumped far since the last frame, so distant (false) peaks
    never win the read.  Scores should still be taken from the raw map.
    """
    ys = np.arange(h)[:, None] - h // 2
    xs = np.arange(w)[None, :] - w // 2
    r = np.hypot(ys, xs)
    return np.where(r <= flat, 1.0, np.exp(-0.5 * ((r - flat) / falloff) ** 2))


def smooth_response(response: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Gaussian low-pass of a response map (circular, applied spectrally).

    Repetitive texture puts ripple on the correlation surface, and an
    argmax read straight off it can lock onto a ripple bump a fraction of
    a bin from the true peak.  An isotropic blur removes the ripple
    without moving a symmetric peak.
    """
    h, w = response.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    kernel = np.exp(-2.0 * np.pi**2 * sigma**2 * (fy * fy + fx * fx))
    return np.real(np.fft.ifft2(np.fft.fft2(response) * kernel))


def peak_displacement(response: np.ndarray) -> tuple[float, float]:
    """Sub-pixel displacement of the response peak from the patch center.

    Uses a 3-point parabola fit per axis with circular neighbour indexing,
    then wraps the integer offset into ``[-N/2, N/2)``.
    """
    h, w = response.shape
    py, px = np.unravel_index(np.argmax(response), response.shape)

    def refine(lo: float, mid: float, hi: float) -> float:
        # response peaks are near-Gaussian, so fit the parabola to the logs
        # when possible (exact for a true Gaussian); fall back to the plain
        # three-point parabola when a neighbour is non-positive
        if lo > 0.0 and mid > 0.0 and hi > 0.0:
            lo, mid, hi = np.log(lo), np.log(mid), np.log(hi)
        den = lo - 2.0 * mid + hi
        if abs(den) < 1e-12:
            return 0.0
        off = 0.5 * (lo - hi) / den
        return float(np.clip(off, -0.5, 0.5))

    dx = px - w // 2
    dy = py - h // 2
    if dx > w / 2:
        dx -= w
    elif dx < -w / 2:
        dx += w
    if dy > h / 2:
        dy -= h
    elif dy < -h / 2:
        dy += h
    sub_x = refine(response[py, (px - 1) % w], response[py, px], response[py, (px + 1) % w])
    sub_y = refine(response[(py - 1) % h, px], response[py, px], response[(py + 1) % h, px])
    return dx + sub_x, dy + sub_y


def correlation_objective(
    filt: np.ndarray,
    spectra: list[np.ndarray],
    targets: list[np.ndarray],
    lam: float = 0.0,
) -> float:
    """Summed regression error of a spectral filter over training pairs.

    ``sum_i || F_i * conj(filt) - Y_i ||^2 + lam * ||filt||^2`` evaluated in
    the frequency domain.  Both closed-form trainers minimize exactly this.
    """
    total = lam * float(np.sum(np.abs(filt) ** 2))
    for F, Y in zip(spectra, targets):
        total += float(np.sum(np.abs(F * np.conj(filt) - Y) ** 2))
    return total


class PatchWindow:
    """Fixed-size resampling window around a (possibly rescaled) box."""

    def __init__(self, patch_size: int, padding: float = SEARCH_PADDING):
        self.size = patch_size
        self.padding = padding
        self.hann = hann2d(patch_size, patch_size)

    def region(self, box: BBox) -> BBox:
        return box.inflated(self.padding)

    def extract(self, gray: np.ndarray, box: BBox) -> np.ndarray:
        region = self.region(box)
        # bandlimit before resampling: the sampling step exceeds a pixel on
        # any real target, and unfiltered bilinear reads alias fine texture
        # into a sampling-phase pattern that biases sub-pixel localization
        sig_y = ANTIALIAS_FACTOR * max(0.0, region.h / self.size - 1.0)
        sig_x = ANTIALIAS_FACTOR * max(0.0, region.w / self.size - 1.0)
        if sig_x > 0.05 or sig_y > 0.05:
            h, w = gray.shape
            y0 = max(0, int(region.y - 3.0 * sig_y))
            y1 = min(h, int(np.ceil(region.y + region.h + 3.0 * sig_y)) + 1)
            x0 = max(0, int(region.x - 3.0 * sig_x))
            x1 = min(w, int(np.ceil(region.x + region.w + 3.0 * sig_x)) + 1)
            crop = ndimage.gaussian_filter(gray[y0:y1, x0:x1], (sig_y, sig_x), mode="nearest")
            shifted = BBox(region.x - x0, region.y - y0, region.w, region.h)
            return extract_patch(crop, shifted, self.size, self.size)
        return extract_patch(gray, region, self.size, self.size)

    def to_image_scale(self, box: BBox) -> tuple[float, float]:
        """Patch-pixel to image-pixel factors for displacement conversion."""
        region = self.region(box)
        return region.w / self.size, region.h / self.size
