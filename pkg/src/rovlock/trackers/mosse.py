"""Adaptive correlation filter tracker with pause/resume.

The filter is the classic closed form: numerator ``A = sum conj(G) * F``
over training patches, denominator ``B = sum F * conj(F) + eps``.  Detection
correlates ``conj(A / B)`` with the spectrum of the search patch; the
conjugation is chosen so that re-detecting the training patch peaks at zero
displacement.

When the peak-to-sidelobe ratio drops below ``psr_pause`` the tracker
reports LOST, freezes its model and holds position; it resumes once the
ratio at the held position climbs back above ``psr_resume``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..vision import BBox
from .base import Tracker, TrackerConfig, TrackResult, TrackStatus
from .dcf import (
    EPS,
    PatchWindow,
    gaussian_peak,
    motion_prior,
    peak_displacement,
    preprocess,
    psr,
    response_sigma,
    smooth_response,
)

CONFIDENCE_PSR_SCALE = 20.0  # PSR mapped to confidence via min(1, psr/20)

# Motion prior applied to the response before the argmax: flat out to
# PRIOR_FLAT_BINS of displacement, Gaussian falloff beyond.  Repetitive
# targets (ladder rungs) produce correlation peaks a full period away from
# the true one; inter-frame motion never legitimately jumps that far, so
# the far peaks are down-weighted.  PSR is always computed on the raw map.
PRIOR_FLAT_BINS = 3.0
PRIOR_FALLOFF_BINS = 1.0
LOCALIZE_PASSES = 5
LOCALIZE_TOL_BINS = 0.02


@dataclass(frozen=True)
class MosseConfig(TrackerConfig):
    learning_rate: float = 0.125
    psr_pause: float = 5.7
    psr_resume: float = 8.0
    eps: float = EPS

    _RATE_FIELDS = ("learning_rate",)
    _NONNEG_FIELDS = ("psr_pause", "psr_resume", "eps")


def train_filter(spectra: list[np.ndarray], targets: list[np.ndarray], eps: float = 0.0):
    """Closed-form numerator/denominator from (patch, target) spectra."""
    A = np.zeros_like(spectra[0])
    B = np.zeros(spectra[0].shape, dtype=np.complex128)
    for F, G in zip(spectra, targets):
        A += np.conj(G) * F
        B += F * np.conj(F)
    return A, B + eps


class MosseTracker(Tracker):
    kind = "mosse"
    recoverable = True  # pause/resume: LOST may clear on its own

    config: MosseConfig

    @classmethod
    def default_config(cls) -> MosseConfig:
        return MosseConfig()

    def _init(self, gray, roi):
        P = self.config.patch_size
        self.window = PatchWindow(P)
        self.target = gaussian_peak(P, P, response_sigma(P, P))
        self.target_spec = np.fft.fft2(self.target)
        self.box = roi
        self.paused = False
        self.prior = motion_prior(P, P, PRIOR_FLAT_BINS, PRIOR_FALLOFF_BINS)
        patch = preprocess(self.window.extract(gray, roi), self.window.hann)
        F = np.fft.fft2(patch)
        self.A, self.B = train_filter([F], [self.target_spec], self.config.eps)

    def _response(self, gray, box):
        patch = preprocess(self.window.extract(gray, box), self.window.hann)
        F = np.fft.fft2(patch)
        H = self.A / np.maximum(self.B.real, self.config.eps)
        return np.real(np.fft.ifft2(np.conj(H) * F)), F

    def _track(self, gray):
        resp, F = self._response(gray, self.box)
        quality = psr(resp)
        conf = min(1.0, quality / CONFIDENCE_PSR_SCALE)

        if self.paused:
            if quality >= self.config.psr_resume:
                self.paused = False
            else:
                return TrackResult(self.box, conf, TrackStatus.LOST)
        elif quality < self.config.psr_pause:
            self.paused = True
            return TrackResult(self.box, conf, TrackStatus.LOST)

        sx, sy = self.window.to_image_scale(self.box)
        # repeated re-measurement at the moved box: the fixed window shrinks
        # single-shot displacement reads, so iterate until the read vanishes
        for it in range(LOCALIZE_PASSES):
            if it > 0:
                resp, _ = self._response(gray, self.box)
            dx, dy = peak_displacement(smooth_response(resp) * self.prior)
            self.box = self.box.shifted(dx * sx, dy * sy)
            if abs(dx) < LOCALIZE_TOL_BINS and abs(dy) < LOCALIZE_TOL_BINS:
                break

        # adapt on the new location
        eta = self.config.learning_rate
        patch = preprocess(self.window.extract(gray, self.box), self.window.hann)
        Fn = np.fft.fft2(patch)
        self.A = (1.0 - eta) * self.A + eta * (np.conj(self.target_spec) * Fn)
        self.B = (1.0 - eta) * self.B + eta * (Fn * np.conj(Fn) + self.config.eps)
        return TrackResult(self.box, conf, TrackStatus.TRACKING)
