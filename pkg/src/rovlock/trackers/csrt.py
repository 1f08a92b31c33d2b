"""Correlation tracker with a spatial reliability mask and channel weights.

Three ingredients on top of the plain ridge filter:

* a binary foreground mask from per-bin Bayes of target vs surround
  histograms restricts the filter's spatial support to likely target
  pixels, so occluders and background stay out of the model;
* per-channel filters are re-solved every frame by repeated closed-form
  ridge steps against a masked residual target (off-mask pixels ask for
  whatever the current filter already produces, so only reliable pixels
  shape the fit);
* channels are fused with reliability weights learned from their response
  peaks.

The filter acts by spectral product (circular convolution): response of
channel ``c`` is ``ifft(fft(z_c) * H_c)``; the matching ridge closed form
is ``H = conj(X) * Y / (conj(X) * X + lam)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..vision import BBox, extract_patch
from .base import Tracker, TrackerConfig, TrackResult, TrackStatus
from .dcf import (
    EPS,
    PatchWindow,
    gaussian_peak,
    motion_prior,
    psr_at,
    response_sigma,
    zscore_response,
)
from .kcf import feature_planes

HIST_BINS = 32
MASK_MIN_FRACTION = 0.10   # below this the mask falls back to all-ones
BACKGROUND_INFLATION = 2.0  # surround ring = inflated box minus box
CONFIDENCE_PSR_SCALE = 20.0
SCALE_CANDIDATES = (0.98, 1.0, 1.02)
SCALE_MARGIN = 0.02  # non-unit scale must beat the unit peak by this factor
SUPPORT_DILATION = 3  # px of target-edge context allowed around the mask
PRIOR_FLAT_BINS = 3.0     # inter-frame motion the prior leaves untouched
PRIOR_FALLOFF_BINS = 1.0


@dataclass(frozen=True)
class CsrtConfig(TrackerConfig):
    lam: float = 0.01
    solver_iters: int = 4
    weight_rate: float = 0.02
    psr_lost: float = 5.0  # above the ~4.1-4.7 PSR a pure-noise map produces
    eps: float = EPS

    _RATE_FIELDS = ("weight_rate",)
    _NONNEG_FIELDS = ("lam", "psr_lost", "eps")

    def __post_init__(self):
        super().__post_init__()
        if self.solver_iters < 1:
            from ..errors import InvalidConfig

            raise InvalidConfig("solver_iters must be >= 1")


def spatial_reliability_map(gray: np.ndarray, box: BBox) -> np.ndarray:
    """Binary foreground mask over the rounded target box.

    Foreground / background likelihoods are 32-bin intensity histograms of
    the box interior and of the surrounding ring (a 2x inflated box minus
    the box).  Per-pixel posterior assumes equal priors; pixels above 0.5
    are foreground.  Only the largest connected component is kept.  If the
    surviving foreground covers less than 10% of the box the mask degrades
    gracefully to all-ones.
    """
    H, W = gray.shape
    bx, by, bw, bh = box.clipped(W, H).rounded()
    bw = min(bw, W - bx)
    bh = min(bh, H - by)
    fg = gray[by : by + bh, bx : bx + bw]

    ring_box = box.inflated(BACKGROUND_INFLATION).clipped(W, H)
    rx, ry, rw, rh = ring_box.rounded()
    rw = min(rw, W - rx)
    rh = min(rh, H - ry)
    ring = gray[ry : ry + rh, rx : rx + rw].copy()
    # cut the target area out of the ring
    ix0, iy0 = max(bx - rx, 0), max(by - ry, 0)
    ring[iy0 : iy0 + bh, ix0 : ix0 + bw] = np.nan

    bg_vals = ring[np.isfinite(ring)]
    if bg_vals.size == 0:
        return np.ones((bh, bw), dtype=np.float64)

    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    hist_fg, _ = np.histogram(fg, bins=edges)
    hist_bg, _ = np.histogram(bg_vals, bins=edges)
    p_fg = hist_fg / max(hist_fg.sum(), 1)
    p_bg = hist_bg / max(hist_bg.sum(), 1)
    post = np.zeros(HIST_BINS)
    nz = (p_fg + p_bg) > 0
    post[nz] = p_fg[nz] / (p_fg[nz] + p_bg[nz])

    idx = np.clip((fg * HIST_BINS).astype(int), 0, HIST_BINS - 1)
    mask = post[idx] > 0.5

    if mask.any():
        labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
        if n > 1:
            sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
            mask = labels == (1 + int(np.argmax(sizes)))
    if mask.sum() < MASK_MIN_FRACTION * mask.size:
        return np.ones((bh, bw), dtype=np.float64)
    return mask.astype(np.float64)


def solve_masked_filter(
    x: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray,
    lam: float,
    iters: int = 4,
    eps: float = EPS,
) -> np.ndarray:
    """Filter (spatial domain) fitting ``conv(x, h) ~ y`` on masked pixels.

    Each round does a frequency-domain ridge solve against the target
    ``m*y + (1-m)*conv(x, h)``: reliable pixels pull the response toward
    ``y`` while off-mask pixels ask for whatever the current filter already
    produces, so they drop out of the fit.  Because every round minimizes
    that surrogate exactly, the masked objective never increases.  Starting
    from ``h = 0``, an all-ones mask reproduces the unconstrained ridge
    solution after one round and an all-zeros mask returns the zero filter.
    """
    X = np.fft.fft2(x)
    den = (X * np.conj(X)).real + lam + eps
    h = np.zeros_like(x)
    resp = np.zeros_like(x)
    for k in range(iters):
        z = mask * y + (1.0 - mask) * resp
        Hf = np.conj(X) * np.fft.fft2(z) / den
        h = np.real(np.fft.ifft2(Hf))
        if k + 1 < iters:
            resp = np.real(np.fft.ifft2(X * np.fft.fft2(h)))
    return h


def masked_objective(x: np.ndarray, y: np.ndarray, mask: np.ndarray, h: np.ndarray, lam: float) -> float:
    """Masked regression error ``||m*(conv(x,h) - y)||^2 + lam*||h||^2``."""
    r = np.real(np.fft.ifft2(np.fft.fft2(x) * np.fft.fft2(h)))
    return float(np.sum((mask * (r - y)) ** 2) + lam * np.sum(h * h))


def solve_support_ridge(
    x: np.ndarray,
    y: np.ndarray,
    support: np.ndarray,
    lam: float,
    steps: int = 12,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Ridge fit of ``corr(x, h) ~ y`` with filter taps confined to ``support``.

    ``corr`` is circular cross-correlation, so for a target peaked at the
    patch center the useful taps sit near the origin and ``support`` must be
    given in those coordinates.  Solved by conjugate gradients on the
    support-restricted normal equations, matrix-free through FFTs.
    Confining the taps matters on scenes where the target moves against a
    static background: a filter with background taps reads a mix of the two
    displacements and mislocates the peak.
    """
    X = np.fft.fft2(x)
    power = (X * np.conj(X)).real
    m = support > 0

    def normal_op(v):
        av = np.real(np.fft.ifft2(power * np.fft.fft2(v))) + lam * v
        return np.where(m, av, 0.0)

    def precondition(v):
        # Jacobi in the frequency domain; the power spectrum spans orders
        # of magnitude, and plain CG stalls without it
        pv = np.real(np.fft.ifft2(np.fft.fft2(v) / (power + lam)))
        return np.where(m, pv, 0.0)

    b = np.where(m, np.real(np.fft.ifft2(X * np.fft.fft2(y))), 0.0)
    if init is None:
        h = np.zeros_like(x)
        r = b.copy()
    else:
        h = np.where(m, init, 0.0)  # warm start, projected onto the support
        r = b - normal_op(h)
    z = precondition(r)
    d = z.copy()
    rz = float(np.sum(r * z))
    for _ in range(steps):
        if rz <= 1e-14:
            break
        qd = normal_op(d)
        curvature = float(np.sum(d * qd))
        if curvature <= 0.0:
            break
        alpha = rz / curvature
        h += alpha * d
        r -= alpha * qd
        z = precondition(r)
        rz_new = float(np.sum(r * z))
        d = z + (rz_new / rz) * d
        rz = rz_new
    return h


def fourier_peak(response: np.ndarray, smooth: float = 1.0) -> tuple[float, float]:
    """Sub-pixel peak location by zoomed trigonometric interpolation.

    The response comes out of an inverse FFT, so its band-limited
    interpolant is exact; evaluating it on a fine grid around the integer
    argmax avoids the toward-the-bin bias a parabola fit shows on
    high-frequency textures.  A Gaussian low-pass (``smooth`` bins) is
    applied first: periodic textures such as ladder rungs put ripple on
    the correlation surface, and without it the global maximum can sit on
    a sidelobe a bin away.  Returns displacement from the map center.
    """
    h, w = response.shape
    R = np.fft.fft2(response)
    if smooth > 0.0:
        fy = np.fft.fftfreq(h)[:, None]
        fx = np.fft.fftfreq(w)[None, :]
        R = R * np.exp(-2.0 * np.pi**2 * smooth**2 * (fy**2 + fx**2))
        smoothed = np.real(np.fft.ifft2(R))
        py, px = np.unravel_index(np.argmax(smoothed), smoothed.shape)
    else:
        py, px = np.unravel_index(np.argmax(response), response.shape)
    ky = np.fft.fftfreq(h) * h
    kx = np.fft.fftfreq(w) * w
    span = np.arange(-100, 101) * 0.02  # +/- 2 bins in 0.02-bin steps
    ey = np.exp(2j * np.pi * np.outer(py + span, ky) / h)
    ex = np.exp(2j * np.pi * np.outer(kx, px + span) / w)
    fine = np.real(ey @ R @ ex) / (h * w)
    iy, ix = np.unravel_index(np.argmax(fine), fine.shape)
    dy = py + span[iy] - h // 2
    dx = px + span[ix] - w // 2
    if dx > w / 2:
        dx -= w
    elif dx < -w / 2:
        dx += w
    if dy > h / 2:
        dy -= h
    elif dy < -h / 2:
        dy += h
    return float(dx), float(dy)


def update_channel_weights(weights: np.ndarray, responses: list[np.ndarray], rate: float) -> np.ndarray:
    """Blend reliability weights toward the normalized response peaks."""
    peaks = np.array([max(float(r.max()), 1e-12) for r in responses])
    peaks /= peaks.sum()
    w = (1.0 - rate) * weights + rate * peaks
    return w / w.sum()


class CsrtTracker(Tracker):
    kind = "csrt"

    config: CsrtConfig

    @classmethod
    def default_config(cls) -> CsrtConfig:
        return CsrtConfig()

    def _init(self, gray, roi):
        P = self.config.patch_size
        self.window = PatchWindow(P)
        self.y = gaussian_peak(P, P, response_sigma(P, P))
        self.box = roi
        self.weights = np.full(3, 1.0 / 3.0)
        self.prior = motion_prior(P, P, PRIOR_FLAT_BINS, PRIOR_FALLOFF_BINS)
        self._spatial_filters = [None, None, None]
        self._retrain(gray)

    # -- model fitting -------------------------------------------------------

    def _patch_mask(self, gray) -> np.ndarray:
        """Reliability mask warped into patch coordinates (zero outside box).

        A small disk at the patch center is always kept reliable: the box is
        centered on the target by construction, and anchoring the response
        peak's neighbourhood stops the solve from pulling the peak toward an
        off-center mask blob on ambiguous textures.
        """
        P = self.window.size
        inner = int(round(P / self.window.padding))
        m_img = spatial_reliability_map(gray, self.box)
        m_in = extract_patch(m_img, BBox(0, 0, m_img.shape[1], m_img.shape[0]), inner, inner)
        mask = np.zeros((P, P))
        o = (P - inner) // 2
        mask[o : o + inner, o : o + inner] = (m_in >= 0.5).astype(np.float64)
        if mask.sum() < 1.0:
            mask[o : o + inner, o : o + inner] = 1.0
        r = max(2, inner // 8)
        ys, xs = np.ogrid[-(P // 2) : P - P // 2, -(P // 2) : P - P // 2]
        mask[xs * xs + ys * ys <= r * r] = 1.0
        return mask

    def _retrain(self, gray):
        planes = feature_planes(self.window.extract(gray, self.box), self.window.hann)
        mask = self._patch_mask(gray)
        # the correlation filter's taps for a center-peaked target live
        # around the origin, so shift the mask there before solving; a small
        # dilation gives the fit the target's edge context without letting
        # background taps back in
        P = self.window.size
        support = np.roll(mask, (-(P // 2), -(P // 2)), axis=(0, 1))
        support = ndimage.binary_dilation(support > 0, iterations=SUPPORT_DILATION)
        spatial = [
            solve_support_ridge(
                p, self.y, support, self.config.lam,
                steps=40 if h0 is None else 12, init=h0,
            )
            for p, h0 in zip(planes, self._spatial_filters)
        ]
        self._spatial_filters = spatial
        self.filters = np.fft.fft2(np.stack(spatial), axes=(-2, -1))
        # zero-point: the constrained fit's own peak sits a fraction of a
        # bin off center; measure it on the training patch (through the same
        # whitened fusion the reads use) and subtract it from every
        # displacement read, otherwise the box slowly drifts
        Fp = np.fft.fft2(planes, axes=(-2, -1))
        fused = sum(
            w * zscore_response(np.real(np.fft.ifft2(Fp[c] * np.conj(self.filters[c]))))
            for c, w in enumerate(self.weights)
        )
        self._zero_point = fourier_peak(fused * self.prior)

    def _responses(self, gray, box) -> list[np.ndarray]:
        """Per-channel correlation responses, each whitened by its own
        sidelobe statistics so a corrupted channel cannot bury the rest."""
        planes = feature_planes(self.window.extract(gray, box), self.window.hann)
        Fz = np.fft.fft2(planes, axes=(-2, -1))
        return [
            zscore_response(np.real(np.fft.ifft2(Fz[c] * np.conj(self.filters[c]))))
            for c in range(3)
        ]

    # -- per-frame step ------------------------------------------------------

    def _track(self, gray):
        responses = self._responses(gray, self.box)
        fused = sum(w * r for w, r in zip(self.weights, responses))
        # the target cannot have jumped across the patch in one frame, so
        # the peak is picked under the motion prior; the score, however, is
        # taken from the raw fused map at that spot, so a frame whose best
        # in-reach response is sidelobe-grade (pure noise, total occlusion)
        # still reads as lost even when a tall false peak sits further out
        guided = fused * self.prior
        py, px = np.unravel_index(np.argmax(guided), guided.shape)
        quality = psr_at(fused, int(py), int(px))
        conf = min(1.0, quality / CONFIDENCE_PSR_SCALE)
        if quality < self.config.psr_lost:
            return TrackResult(self.box, conf, TrackStatus.LOST)

        zx, zy = self._zero_point
        dx, dy = fourier_peak(guided)
        sx, sy = self.window.to_image_scale(self.box)
        moved = self.box.shifted((dx - zx) * sx, (dy - zy) * sy)
        # residual passes at the moved box cancel localization bias; fine
        # textures under-read sub-bin offsets, so iterate a little
        for it in range(8):
            fused2 = sum(w * r for w, r in zip(self.weights, self._responses(gray, moved)))
            rx, ry = fourier_peak(fused2 * self.prior)
            # sub-bin cap keeps a ripple-locked read from kicking the box
            # out of the main lobe's basin
            rx = float(np.clip(rx - zx, -0.6, 0.6))
            ry = float(np.clip(ry - zy, -0.6, 0.6))
            moved = moved.shifted(rx * sx, ry * sy)
            if it >= 1 and abs(rx) < 0.05 and abs(ry) < 0.05:
                break

        # scale refresh: best fused peak over candidate box sizes; the 2%
        # zoom barely changes a windowed patch, so near-ties are common and
        # a deadband keeps them from random-walking the box size
        peaks = {}
        for s in SCALE_CANDIDATES:
            cand = moved.scaled_about_center(s)
            rs = self._responses(gray, cand)
            fused_s = sum(w * r for w, r in zip(self.weights, rs))
            peaks[s] = float((fused_s * self.prior).max())
        best_scale = max(peaks, key=peaks.get)
        if peaks[best_scale] <= peaks[1.0] * (1.0 + SCALE_MARGIN):
            best_scale = 1.0
        self.box = moved.scaled_about_center(best_scale)

        self.weights = update_channel_weights(self.weights, responses, self.config.weight_rate)
        self._retrain(gray)
        return TrackResult(self.box, conf, TrackStatus.TRACKING)
