"""Online-boosting tracker: AdaBoost selector cascade over a Haar pool.

Each frame the tracker scores a dense translation grid with its selected
committee, moves to the argmax box, then runs one boosting round on fresh
positive/negative samples drawn around the new location.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateSamples, NotTrained
from ..vision import BBox, integral_image
from .base import Tracker, TrackerConfig, TrackResult, TrackStatus
from .haar import FeaturePool

POOL_SIZE = 250
N_SELECTORS = 50
ERROR_FLOOR = 1e-4  # keeps alpha finite when a stump is perfect (or hopeless)
SEARCH_RADIUS = 25  # px, dense stride-1 grid
POS_RADIUS = 2      # positive sample jitter around the box
NEG_INNER = 8       # negative annulus, px from the center
NEG_OUTER = 30
N_NEGATIVES = 50
LOST_CONFIDENCE = 0.5  # committee majority below this means Lost


@dataclass
class BoostModel:
    """Selector committee state: pool, chosen indices, votes, sample weights."""

    pool: FeaturePool
    selected: list[int] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    sample_weights: np.ndarray | None = None


def boost_train_step(model: BoostModel, responses: np.ndarray, labels: np.ndarray,
                     rng: np.random.Generator) -> BoostModel:
    """One boosting round over a batch of labelled samples.

    ``responses`` is the (pool, samples) raw feature matrix for the batch.
    Selector slots are filled greedily without replacement by weighted
    mismatch; after the round, the worst unselected pool member is replaced
    with a fresh random feature (its slot starts untrained).
    """
    labels = np.asarray(labels, dtype=np.float64)
    if np.all(labels > 0) or np.all(labels < 0):
        raise DegenerateSamples("boosting needs both labels in every batch")
    model.pool.update_stats(responses, labels)
    preds = model.pool.predictions(responses)  # (pool, samples) in {-1,+1}
    mism = (preds != labels[None, :]).astype(np.float64)

    w = np.full(labels.size, 1.0 / labels.size)
    selected: list[int] = []
    alphas: list[float] = []
    taken = np.zeros(len(model.pool), dtype=bool)
    errors = None
    for _ in range(min(N_SELECTORS, len(model.pool))):
        errors = mism @ w
        errors_masked = np.where(taken, np.inf, errors)
        best = int(np.argmin(errors_masked))
        e = float(np.clip(errors[best], ERROR_FLOOR, 1.0 - ERROR_FLOOR))
        alpha = 0.5 * np.log((1.0 - e) / e)
        selected.append(best)
        alphas.append(alpha)
        taken[best] = True
        w = w * np.exp(-alpha * labels * preds[best])
        w /= w.sum()

    # swap out the weakest unselected stump for a fresh random feature
    errors_unsel = np.where(taken, -np.inf, errors)
    worst = int(np.argmax(errors_unsel))
    from .haar import WeakClassifier, random_feature

    model.pool.classifiers[worst] = WeakClassifier(random_feature(rng))
    model.selected = selected
    model.alphas = alphas
    model.sample_weights = w
    return model


def boost_classify(model: BoostModel, responses: np.ndarray) -> np.ndarray:
    """Committee scores for a (pool, boxes) response matrix."""
    if not model.selected:
        raise NotTrained("no selectors chosen yet")
    score = np.zeros(responses.shape[1])
    for idx, alpha in zip(model.selected, model.alphas):
        score += alpha * model.pool.classifiers[idx].classify(responses[idx])
    return score


def committee_responses(model: BoostModel, ii: np.ndarray, bx, by, w, h) -> np.ndarray:
    """(n_selected, n_boxes) raw responses of just the chosen stumps.

    Scoring a dense search grid only needs the committee, not the whole
    pool, and the pool is five times larger.
    """
    from .haar import batch_eval

    feats = [model.pool.classifiers[i].feature for i in model.selected]
    return batch_eval(feats, ii, bx, by, w, h)


@dataclass(frozen=True)
class BoostingConfig(TrackerConfig):
    n_pool: int = POOL_SIZE
    n_selectors: int = N_SELECTORS
    search_radius: int = SEARCH_RADIUS
    lost_confidence: float = LOST_CONFIDENCE

    _RATE_FIELDS = ("lost_confidence",)


class BoostingTracker(Tracker):
    kind = "boosting"

    config: BoostingConfig

    @classmethod
    def default_config(cls) -> BoostingConfig:
        return BoostingConfig()

    # -- sampling ------------------------------------------------------------

    def _sample_boxes(self, shape) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Training sample centers: positive jitter disk + negative annulus."""
        H, W = shape
        cx, cy = self.box.cx, self.box.cy
        offs = [
            (dx, dy)
            for dy in range(-POS_RADIUS, POS_RADIUS + 1)
            for dx in range(-POS_RADIUS, POS_RADIUS + 1)
            if dx * dx + dy * dy <= POS_RADIUS * POS_RADIUS
        ]
        xs = [cx + dx for dx, dy in offs]
        ys = [cy + dy for dx, dy in offs]
        labels = [1.0] * len(offs)
        n = 0
        while n < N_NEGATIVES:
            dx, dy = self.rng.uniform(-NEG_OUTER, NEG_OUTER, size=2)
            r = float(np.hypot(dx, dy))
            if not (NEG_INNER <= r <= NEG_OUTER):
                continue
            xs.append(cx + dx)
            ys.append(cy + dy)
            labels.append(-1.0)
            n += 1
        bx = np.asarray(xs) - self.box.w / 2.0
        by = np.asarray(ys) - self.box.h / 2.0
        bx = np.clip(bx, 0, W - self.box.w)
        by = np.clip(by, 0, H - self.box.h)
        return bx, by, np.asarray(labels)

    def _train(self, ii, shape):
        bx, by, labels = self._sample_boxes(shape)
        resp = self.model.pool.responses(ii, bx, by, self.box.w, self.box.h)
        boost_train_step(self.model, resp, labels, self.rng)

    # -- lifecycle -----------------------------------------------------------

    def _init(self, gray, roi):
        w = min(roi.w, gray.shape[1] - 2.0)
        h = min(roi.h, gray.shape[0] - 2.0)
        self.box = BBox(roi.x, roi.y, w, h).clipped(gray.shape[1], gray.shape[0])
        self.model = BoostModel(FeaturePool.random(self.config.n_pool, self.rng))
        ii = integral_image(gray)
        self._train(ii, gray.shape)

    def _track(self, gray):
        H, W = gray.shape
        ii = integral_image(gray)
        r = self.config.search_radius
        xs = np.arange(-r, r + 1, dtype=np.float64)
        gx, gy = np.meshgrid(self.box.x + xs, self.box.y + xs)
        gx = np.clip(gx.ravel(), 0, W - self.box.w)
        gy = np.clip(gy.ravel(), 0, H - self.box.h)
        resp = committee_responses(self.model, ii, gx, gy, self.box.w, self.box.h)
        alphas = np.asarray(self.model.alphas)
        votes = np.stack(
            [
                self.model.pool.classifiers[idx].classify(resp[t])
                for t, idx in enumerate(self.model.selected)
            ]
        )
        scores = alphas @ votes
        # break score plateaus toward the smallest displacement: the score
        # map saturates near the target because training labels a whole
        # disk of shifts positive, and argmax alone would drift to a corner
        order = np.argsort(
            np.hypot(gx - self.box.x, gy - self.box.y), kind="stable"
        )
        best = int(order[np.argmax(scores[order])])
        self.box = BBox(float(gx[best]), float(gy[best]), self.box.w, self.box.h)

        # confidence: alpha-weighted fraction of selectors voting positive
        total = float(alphas.sum())
        conf = float(alphas @ (votes[:, best] > 0)) / total if total > 0 else 0.0
        if conf < self.config.lost_confidence:
            return TrackResult(self.box, conf, TrackStatus.LOST)
        self._train(ii, gray.shape)
        return TrackResult(self.box, conf, TrackStatus.TRACKING)
