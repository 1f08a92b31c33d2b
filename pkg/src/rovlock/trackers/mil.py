"""Multiple-instance-learning tracker over the shared Haar pool.

Instead of hard-labelling single patches, training samples are grouped
into bags: one positive bag of every shift within a small disk of the
current estimate, and a negative bag drawn from an annulus. Weak
classifiers are chosen greedily to maximize the noisy-OR bag likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateSampling, InvalidConfig, NotTrained
from ..vision import BBox, integral_image
from .base import Tracker, TrackerConfig, TrackResult, TrackStatus
from .haar import FeaturePool, batch_eval

POOL_SIZE = 250
N_WEAK = 50         # committee size K chosen out of the pool
POS_RADIUS = 4      # every integer shift within this disk joins the positive bag
NEG_INNER = 8       # negative annulus, px from the center
NEG_OUTER = 30
N_NEGATIVES = 65
SEARCH_RADIUS = 25  # px, dense stride-1 grid
LOST_CONFIDENCE = 0.5
PROB_EPS = 1e-6     # keeps bag log-likelihoods finite
MAX_SAMPLE_ROUNDS = 20
SCORE_MARGIN = 2.0  # one weak vote; within it, prefer the smaller move


def noisy_or(probs) -> float:
    """Bag-level positive probability: 1 - prod(1 - p_j) over instances."""
    p = np.asarray(probs, dtype=np.float64)
    return float(1.0 - np.prod(1.0 - p))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass
class Bag:
    """A labelled group of equally sized sample boxes around one location.

    ``features`` is the (instances, pool) response matrix; it stays None
    until a feature pool has seen the frame (geometry is decided first,
    features attached second).
    """

    label: float
    xs: np.ndarray  # top-left corners; all instances share the box size
    ys: np.ndarray
    features: np.ndarray | None = None

    def __len__(self) -> int:
        return int(np.asarray(self.xs).size)


def mil_bag_sample(frame: np.ndarray, center_box: BBox, r_pos: float = POS_RADIUS,
                   r_neg_inner: float = NEG_INNER, r_neg_outer: float = NEG_OUTER,
                   seed: int = 0, n_negatives: int = N_NEGATIVES,
                   pool: FeaturePool | None = None) -> tuple[Bag, Bag]:
    """Draw one positive and one negative bag around ``center_box``.

    The positive bag takes every integer offset with norm <= r_pos (the
    unshifted box always included); negatives are sampled uniformly from
    the annulus, rejecting boxes that would leave the frame. When a pool
    is given, both bags get their feature matrices attached.
    """
    if not (r_pos < r_neg_inner < r_neg_outer):
        raise InvalidConfig("bag radii must satisfy r_pos < r_neg_inner < r_neg_outer")
    H, W = frame.shape[:2]
    w, h = center_box.w, center_box.h

    r = int(np.floor(r_pos))
    offs = [
        (dx, dy)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy <= r_pos * r_pos
    ]
    px = np.clip(center_box.x + np.array([o[0] for o in offs], dtype=np.float64), 0, W - w)
    py = np.clip(center_box.y + np.array([o[1] for o in offs], dtype=np.float64), 0, H - h)
    positive = Bag(1.0, px, py)

    rng = np.random.default_rng(seed)
    nx: list[float] = []
    ny: list[float] = []
    for _ in range(MAX_SAMPLE_ROUNDS):
        if len(nx) >= n_negatives:
            break
        cand = rng.uniform(-r_neg_outer, r_neg_outer, size=(4 * n_negatives, 2))
        for dx, dy in np.round(cand):
            dist = float(np.hypot(dx, dy))
            if not (r_neg_inner <= dist <= r_neg_outer):
                continue
            x, y = center_box.x + dx, center_box.y + dy
            if x < 0 or y < 0 or x + w > W or y + h > H:
                continue  # annulus shrinks to what the frame can hold
            nx.append(x)
            ny.append(y)
            if len(nx) >= n_negatives:
                break
    if not nx:
        raise DegenerateSampling("no negative sample fits inside the frame")
    negative = Bag(-1.0, np.asarray(nx), np.asarray(ny))

    if pool is not None:
        ii = integral_image(frame)
        positive.features = pool.responses(ii, positive.xs, positive.ys, w, h).T
        negative.features = pool.responses(ii, negative.xs, negative.ys, w, h).T
    return positive, negative


@dataclass
class MilModel:
    """Greedy committee state: pool, chosen indices, unit votes."""

    pool: FeaturePool
    selected: list[int] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)


def bag_log_likelihood(probs_pos: np.ndarray, probs_neg: np.ndarray) -> np.ndarray:
    """Noisy-OR log-likelihood, vectorized over leading candidate axes.

    ``probs_pos``/``probs_neg`` hold instance probabilities with the
    instance index last; the positive set forms one bag, each negative
    instance counts as its own (all-negative) bag.
    """
    p_pos = np.clip(probs_pos, PROB_EPS, 1.0 - PROB_EPS)
    p_neg = np.clip(probs_neg, PROB_EPS, 1.0 - PROB_EPS)
    bag_pos = 1.0 - np.prod(1.0 - p_pos, axis=-1)
    bag_pos = np.clip(bag_pos, PROB_EPS, 1.0 - PROB_EPS)
    return np.log(bag_pos) + np.log(1.0 - p_neg).sum(axis=-1)


def mil_train_step(model: MilModel, pos: Bag, neg: Bag,
                   n_weak: int = N_WEAK) -> MilModel:
    """Update pool statistics, then greedily rebuild the committee.

    Each of the K slots takes the pool member that most raises the total
    bag log-likelihood when its vote is added to the running score H
    (instance probability sigma(H)); members are used at most once.
    """
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateSampling("both bags must be non-empty")
    if pos.features is None or neg.features is None:
        raise ValueError("bags carry no feature matrices; sample with pool=")

    values = np.vstack([pos.features, neg.features]).T  # (pool, samples)
    labels = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    model.pool.update_stats(values, labels)

    votes = model.pool.predictions(values)  # (pool, samples) in {-1,+1}
    npos = len(pos)
    H = np.zeros(values.shape[1])
    taken = np.zeros(len(model.pool), dtype=bool)
    selected: list[int] = []
    for _ in range(min(n_weak, len(model.pool))):
        probs = sigmoid(H[None, :] + votes)  # (pool, samples) candidates
        ll = bag_log_likelihood(probs[:, :npos], probs[:, npos:])
        ll[taken] = -np.inf
        best = int(np.argmax(ll))
        selected.append(best)
        taken[best] = True
        H = H + votes[best]
    model.selected = selected
    model.alphas = [1.0] * len(selected)
    return model


def mil_classify(model: MilModel, patch: np.ndarray):
    """Committee score H(x) for pool-response vectors.

    ``patch`` is one feature vector over the pool, or a (n, pool) batch;
    returns a scalar for the former, an array for the latter.
    """
    if not model.selected:
        raise NotTrained("no committee chosen yet")
    v = np.asarray(patch, dtype=np.float64)
    batch = np.atleast_2d(v)
    score = np.zeros(batch.shape[0])
    for idx, alpha in zip(model.selected, model.alphas):
        score += alpha * model.pool.classifiers[idx].classify(batch[:, idx])
    return score if v.ndim > 1 else float(score[0])


@dataclass(frozen=True)
class MilConfig(TrackerConfig):
    n_pool: int = POOL_SIZE
    n_weak: int = N_WEAK
    search_radius: int = SEARCH_RADIUS
    pos_radius: float = POS_RADIUS
    neg_inner: float = NEG_INNER
    neg_outer: float = NEG_OUTER
    n_negatives: int = N_NEGATIVES
    lost_confidence: float = LOST_CONFIDENCE

    _RATE_FIELDS = ("lost_confidence",)


class MilTracker(Tracker):
    kind = "mil"

    config: MilConfig

    @classmethod
    def default_config(cls) -> MilConfig:
        return MilConfig()

    def _train(self, gray):
        pos, neg = mil_bag_sample(
            gray, self.box,
            r_pos=self.config.pos_radius,
            r_neg_inner=self.config.neg_inner,
            r_neg_outer=self.config.neg_outer,
            seed=int(self.rng.integers(2**31)),
            n_negatives=self.config.n_negatives,
            pool=self.model.pool,
        )
        mil_train_step(self.model, pos, neg, self.config.n_weak)

    def _init(self, gray, roi):
        w = min(roi.w, gray.shape[1] - 2.0)
        h = min(roi.h, gray.shape[0] - 2.0)
        self.box = BBox(roi.x, roi.y, w, h).clipped(gray.shape[1], gray.shape[0])
        self.model = MilModel(FeaturePool.random(self.config.n_pool, self.rng))
        self._train(gray)

    def _track(self, gray):
        H, W = gray.shape
        ii = integral_image(gray)
        r = self.config.search_radius
        xs = np.arange(-r, r + 1, dtype=np.float64)
        gx, gy = np.meshgrid(self.box.x + xs, self.box.y + xs)
        gx = np.clip(gx.ravel(), 0, W - self.box.w)
        gy = np.clip(gy.ravel(), 0, H - self.box.h)
        feats = [self.model.pool.classifiers[i].feature for i in self.model.selected]
        resp = batch_eval(feats, ii, gx, gy, self.box.w, self.box.h)
        votes = np.stack(
            [
                self.model.pool.classifiers[idx].classify(resp[t])
                for t, idx in enumerate(self.model.selected)
            ]
        )
        scores = votes.sum(axis=0)
        # vote sums move in steps of 2, so a single disagreeing stump can
        # drag the argmax a pixel or two; stay within one flip of the max
        # and take the smallest displacement
        dist = np.hypot(gx - self.box.x, gy - self.box.y)
        near = np.flatnonzero(scores >= scores.max() - SCORE_MARGIN)
        best = int(near[np.argmin(dist[near])])
        self.box = BBox(float(gx[best]), float(gy[best]), self.box.w, self.box.h)

        conf = float(np.mean(votes[:, best] > 0))
        if conf < self.config.lost_confidence:
            return TrackResult(self.box, conf, TrackStatus.LOST)
        self._train(gray)
        return TrackResult(self.box, conf, TrackStatus.TRACKING)
