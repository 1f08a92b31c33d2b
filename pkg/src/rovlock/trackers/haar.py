"""Haar-like rectangle features over integral images.

Shared by the two online-learning trackers.  A feature is a randomly
placed sub-rectangle of the unit box split into 2-4 equal-weight parts;
responses are evaluated against any pixel box by scaling the unit
coordinates, snapping so the positive and negative parts cover equal
pixel areas (which keeps the response exactly zero on constant images).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import OutOfBounds
from ..vision import BBox, rect_sum

KINDS = ("two_rect_h", "two_rect_v", "three_rect", "four_rect")

# running class statistics forget at this rate per training batch
STAT_FORGETTING = 0.85
MIN_FEATURE_SIDE = 0.1  # of the unit box


@dataclass(frozen=True)
class HaarFeature:
    kind: str
    fx: float  # outer sub-rectangle in unit-box coordinates
    fy: float
    fw: float
    fh: float

    def pixel_rects(self, box: BBox) -> list[tuple]:
        """Split the scaled outer rect into weighted pixel rects.

        Widths/heights are snapped down to multiples of the split count so
        every part covers the same number of pixels; the weights then sum to
        zero over any constant image.  The three-part split lists the middle
        rect twice (weight +1 each) so individual weights stay in {+1, -1}.
        ``box.x``/``box.y`` may be arrays (one rect set per box) as long as
        the sizes are scalar.
        """
        w = max(2, int(self.fw * float(box.w)))
        h = max(2, int(self.fh * float(box.h)))
        x0 = np.round(np.asarray(box.x) + self.fx * box.w).astype(np.int64)
        y0 = np.round(np.asarray(box.y) + self.fy * box.h).astype(np.int64)
        # rounding may push the snapped rect past the box edge; keep it inside
        xlo = np.ceil(np.asarray(box.x)).astype(np.int64)
        ylo = np.ceil(np.asarray(box.y)).astype(np.int64)
        x0 = np.clip(x0, xlo, np.maximum(xlo, np.floor(np.asarray(box.x) + box.w).astype(np.int64) - w))
        y0 = np.clip(y0, ylo, np.maximum(ylo, np.floor(np.asarray(box.y) + box.h).astype(np.int64) - h))
        k = self.kind
        if k == "two_rect_h":
            w -= w % 2
            half = w // 2
            return [(x0, y0, half, h, -1.0), (x0 + half, y0, half, h, +1.0)]
        if k == "two_rect_v":
            h -= h % 2
            half = h // 2
            return [(x0, y0, w, half, -1.0), (x0, y0 + half, w, half, +1.0)]
        if k == "three_rect":
            w -= w % 3
            third = max(1, w // 3)
            mid = (x0 + third, y0, third, h, +1.0)
            return [
                (x0, y0, third, h, -1.0),
                mid,
                mid,
                (x0 + 2 * third, y0, third, h, -1.0),
            ]
        if k == "four_rect":
            w -= w % 2
            h -= h % 2
            hw, hh = w // 2, h // 2
            return [
                (x0, y0, hw, hh, +1.0),
                (x0 + hw, y0, hw, hh, -1.0),
                (x0, y0 + hh, hw, hh, -1.0),
                (x0 + hw, y0 + hh, hw, hh, +1.0),
            ]
        raise ValueError(f"unknown feature kind {k!r}")


def random_feature(rng: np.random.Generator) -> HaarFeature:
    kind = KINDS[int(rng.integers(len(KINDS)))]
    fw = float(rng.uniform(MIN_FEATURE_SIDE, 1.0))
    fh = float(rng.uniform(MIN_FEATURE_SIDE, 1.0))
    fx = float(rng.uniform(0.0, 1.0 - fw))
    fy = float(rng.uniform(0.0, 1.0 - fh))
    return HaarFeature(kind, fx, fy, fw, fh)


def batch_eval(features, ii: np.ndarray, bx, by, w, h) -> np.ndarray:
    """(n_features, n_boxes) responses at integer-anchored same-size boxes.

    One fused integral-image gather covers every rect of every feature, so
    dense search grids cost four fancy-index reads total instead of four
    per rect.  Boxes are snapped to integer pixels.
    """
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    gx = np.round(np.asarray(bx, dtype=np.float64)).astype(np.int64).ravel()
    gy = np.round(np.asarray(by, dtype=np.float64)).astype(np.int64).ravel()
    wi, hi = int(w), int(h)
    gx = np.clip(gx, 0, W - wi)
    gy = np.clip(gy, 0, H - hi)
    anchor = BBox(0, 0, w, h)
    slots = []  # 4 rect slots per feature, zero-weight padded
    for f in features:
        rects = f.pixel_rects(anchor)
        rects = rects + [(0, 0, 1, 1, 0.0)] * (4 - len(rects))
        slots.append([(int(rx), int(ry), int(rw), int(rh), wg) for rx, ry, rw, rh, wg in rects])
    arr = np.asarray(slots, dtype=np.float64)  # (nfeat, 4, 5)
    ox = arr[:, :, 0].astype(np.int64)[:, :, None]  # (nfeat, 4, 1)
    oy = arr[:, :, 1].astype(np.int64)[:, :, None]
    rw = arr[:, :, 2].astype(np.int64)[:, :, None]
    rh = arr[:, :, 3].astype(np.int64)[:, :, None]
    wg = arr[:, :, 4][:, :, None]
    x = gx[None, None, :] + ox
    y = gy[None, None, :] + oy
    stride = ii.shape[1]
    flat = ii.ravel()
    s = (
        flat[(y + rh) * stride + (x + rw)]
        - flat[y * stride + (x + rw)]
        - flat[(y + rh) * stride + x]
        + flat[y * stride + x]
    )
    return (wg * s).sum(axis=1) / (float(w) * float(h))


def haar_eval(feature: HaarFeature, ii: np.ndarray, box: BBox):
    """Weighted rect-sum response of ``feature`` scaled into ``box``.

    ``box`` may carry vector coordinates (equal-length arrays in x/y), in
    which case one response per box is returned.  Responses are normalized
    by the box pixel area so values are comparable across scales.
    """
    H, W = ii.shape[0] - 1, ii.shape[1] - 1
    bx = np.asarray(box.x)
    by = np.asarray(box.y)
    if np.any(bx < 0) or np.any(by < 0) or np.any(bx + box.w > W) or np.any(by + box.h > H):
        raise OutOfBounds("feature box outside the image")
    total = 0.0
    for rx, ry, rw, rh, wgt in feature.pixel_rects(box):
        total = total + wgt * rect_sum(ii, rx, ry, rw, rh)
    return total / (box.w * box.h)


@dataclass
class WeakClassifier:
    """Decision stump on one Haar response with online class statistics.

    The threshold sits at the midpoint of the running class means and the
    polarity orients the inequality so the positive class satisfies it
    (classify returns +1 iff ``p * v < p * theta``).
    """

    feature: HaarFeature
    mu_pos: float = 0.0
    mu_neg: float = 0.0
    var_pos: float = 1.0
    var_neg: float = 1.0
    seen: bool = False

    def update_stats(self, values: np.ndarray, labels: np.ndarray) -> None:
        pos = values[labels > 0]
        neg = values[labels < 0]
        if pos.size == 0 or neg.size == 0:
            return
        f = STAT_FORGETTING if self.seen else 0.0
        self.mu_pos = f * self.mu_pos + (1.0 - f) * float(pos.mean())
        self.mu_neg = f * self.mu_neg + (1.0 - f) * float(neg.mean())
        self.var_pos = f * self.var_pos + (1.0 - f) * float(pos.var())
        self.var_neg = f * self.var_neg + (1.0 - f) * float(neg.var())
        self.seen = True

    @property
    def theta(self) -> float:
        return 0.5 * (self.mu_pos + self.mu_neg)

    @property
    def polarity(self) -> float:
        return -1.0 if self.mu_pos >= self.mu_neg else 1.0

    def classify(self, values):
        """Vectorized {-1, +1} decision for raw feature responses."""
        v = np.asarray(values, dtype=np.float64)
        out = np.where(self.polarity * v < self.polarity * self.theta, 1.0, -1.0)
        return out if out.ndim else float(out)


@dataclass
class FeaturePool:
    """A bank of weak classifiers sharing one frame's integral image."""

    classifiers: list[WeakClassifier] = field(default_factory=list)

    @classmethod
    def random(cls, size: int, rng: np.random.Generator) -> "FeaturePool":
        return cls([WeakClassifier(random_feature(rng)) for _ in range(size)])

    def __len__(self) -> int:
        return len(self.classifiers)

    def responses(self, ii: np.ndarray, boxes_x, boxes_y, w, h) -> np.ndarray:
        """(n_classifiers, n_boxes) raw responses at equally sized boxes."""
        return batch_eval([c.feature for c in self.classifiers], ii, boxes_x, boxes_y, w, h)

    def update_stats(self, responses: np.ndarray, labels: np.ndarray) -> None:
        for c, row in zip(self.classifiers, responses):
            c.update_stats(row, labels)

    def predictions(self, responses: np.ndarray) -> np.ndarray:
        """(n_classifiers, n_boxes) matrix of {-1, +1} decisions."""
        return np.stack([c.classify(row) for c, row in zip(self.classifiers, responses)])
