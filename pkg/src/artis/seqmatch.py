"""Similarity matrices and velocity-swept sequence search.

Matrices use distance polarity here (lower is better). For every observation
column ``j`` the matcher scores straight lines through the trailing ``ds``
columns of the contrast-enhanced matrix, one per template end index and
velocity, and keeps the best end index if it is sufficiently better than the
best competitor outside an exclusion window.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_odd, check_vectors
from .exceptions import ValidationError

POLARITIES = ("distance", "similarity")
STAGES = ("raw", "enhanced", "thresholded")


@dataclass(frozen=True)
class SimilarityMatrix:
    scores: np.ndarray
    polarity: str
    stage: str

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValidationError(f"score matrix must be 2-D, got {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("score matrix has non-finite entries")
        if self.polarity not in POLARITIES or self.stage not in STAGES:
            raise ValidationError(f"bad polarity/stage {self.polarity!r}/{self.stage!r}")
        object.__setattr__(self, "scores", scores)

    @property
    def m(self) -> int:
        return self.scores.shape[0]

    @property
    def n(self) -> int:
        return self.scores.shape[1]


@dataclass
class MatchSegment:
    """A run of ``(template_index, observation_index)`` correspondences."""

    pairs: list
    score: float = 0.0
    velocity: float = float("nan")
    pair_scores: list = field(default_factory=list)
    pair_velocities: list = field(default_factory=list)

    def __post_init__(self):
        self.pairs = [(int(i), int(j)) for i, j in self.pairs]
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if j1 <= j0 or i1 < i0:
                raise ValidationError(
                    f"segment not monotone at {(i0, j0)} -> {(i1, j1)}"
                )

    def __len__(self):
        return len(self.pairs)


def ssd_matrix(temp, obs) -> SimilarityMatrix:
    """Sum of squared cellwise differences, min-max normalised to [0, 1]."""
    T = check_vectors(temp)
    O = check_vectors(obs)
    if T.shape[1] != O.shape[1]:
        raise ValidationError(f"descriptor sizes differ: {T.shape[1]} vs {O.shape[1]}")
    S = cdist(T, O, "sqeuclidean")
    lo, hi = S.min(), S.max()
    S = (S - lo) / (hi - lo) if hi > lo else np.zeros_like(S)
    return SimilarityMatrix(S, "distance", "raw")


def _window_sums(M: np.ndarray, half: int) -> np.ndarray:
    """Sum over the edge-clipped ``(2*half+1)``-square around every entry."""
    m, n = M.shape
    c = np.zeros((m + 1, n + 1))
    c[1:, 1:] = M.cumsum(0).cumsum(1)
    r0 = np.clip(np.arange(m) - half, 0, m)
    r1 = np.clip(np.arange(m) + half + 1, 0, m)
    c0 = np.clip(np.arange(n) - half, 0, n)
    c1 = np.clip(np.arange(n) + half + 1, 0, n)
    return (c[np.ix_(r1, c1)] - c[np.ix_(r0, c1)] - c[np.ix_(r1, c0)] + c[np.ix_(r0, c0)])


def enhance(S: SimilarityMatrix, window: int = 11) -> SimilarityMatrix:
    """Standardise each entry against the mean and (population) std of its square patch."""
    window = check_odd(window, "window")
    M = S.scores
    half = window // 2
    # centre the data first so E[x^2] - E[x]^2 does not cancel catastrophically
    M = M - M.mean()
    count = _window_sums(np.ones_like(M), half)
    mean = _window_sums(M, half) / count
    var = np.maximum(_window_sums(M * M, half) / count - mean * mean, 0.0)
    sd = np.sqrt(var)
    out = np.zeros_like(M)
    ok = sd >= 1e-9
    out[ok] = (M[ok] - mean[ok]) / sd[ok]
    return SimilarityMatrix(out, S.polarity, "enhanced")


def velocities(v_min: float, v_max: float, v_step: float) -> np.ndarray:
    if not 0 < v_min <= v_max or v_step <= 0:
        raise ValidationError("need 0 < v_min <= v_max and v_step > 0")
    count = int(math.floor((v_max - v_min) / v_step + 1e-9)) + 1
    return v_min + v_step * np.arange(count)


def line_scores(D: np.ndarray, ds: int, vels: np.ndarray):
    """Best line sum per (template end index, observation column) and its velocity.

    When several velocities reach the same best sum the midpoint of their
    range is returned.

    ``D`` must be non-negative. A line with end index ``e`` at column ``j``
    visits rows ``round(e - v * (ds - 1 - k))`` in columns ``j - ds + 1 + k``.
    Lines leaving the template, and columns ``j < ds - 1``, score ``inf``.
    """
    m, n = D.shape
    best = np.full((m, n), np.inf)
    v_lo = np.full((m, n), np.nan)
    v_hi = np.full((m, n), np.nan)
    for v in vels:
        total = np.zeros((m, n))
        for k in range(ds):
            back = ds - 1 - k  # columns behind j
            off = int(math.floor(v * back + 0.5))  # rows behind e
            shifted = np.full((m, n), np.inf)
            if off < m and back < n:
                shifted[off:, back:] = D[: m - off, : n - back]
            total += shifted
        # rounding maps neighbouring velocities onto the same rows; report
        # the middle of the tied range instead of its slow end
        better = total < best
        tied = (total == best) & np.isfinite(total)
        best[better] = total[better]
        v_lo[better] = v
        v_hi[better | tied] = v
    return best, (v_lo + v_hi) / 2.0


def line_search(S_enh: SimilarityMatrix, ds: int = 10, v_min: float = 0.8,
                v_max: float = 1.25, v_step: float = 0.05, uniqueness_mu: float = 0.95,
                window_exclude: int = 10) -> list[MatchSegment]:
    """Velocity-swept sequence matching over a contrast-enhanced distance matrix.

    Line sums are taken over ``S_enh`` shifted by its global minimum so the
    uniqueness test compares non-negative scores: the best end index ``i*``
    is accepted iff ``best < uniqueness_mu * runner_up``, where the runner-up
    is the best end index more than ``window_exclude`` rows from ``i*``.
    When no such competitor exists the match is accepted.
    """
    if S_enh.polarity != "distance":
        raise ValidationError("line_search expects a distance-polarity matrix")
    if ds < 2:
        raise ValidationError("ds must be >= 2")
    vels = velocities(v_min, v_max, v_step)
    m, n = S_enh.scores.shape
    if ds > n:
        warnings.warn(f"ds={ds} exceeds observation length {n}; no matches", RuntimeWarning)
        return []

    D = S_enh.scores - S_enh.scores.min()
    scores, vel = line_scores(D, ds, vels)
    rows = np.arange(m)

    accepted = []  # (i, j, score, velocity)
    for j in range(ds - 1, n):
        col = scores[:, j]
        if not np.isfinite(col).any():
            continue
        i_best = int(np.argmin(col))  # first minimum: smallest index wins ties
        best = col[i_best]
        outside = col[np.abs(rows - i_best) > window_exclude]
        runner = outside.min() if outside.size else np.inf
        if np.isfinite(runner):
            # strict, so an exact tie (including 0 vs 0) is ambiguous
            if not best < uniqueness_mu * runner:
                continue
        accepted.append((i_best, j, float(best), float(vel[i_best, j])))

    return chain_points(accepted, max_step=math.ceil(v_max))


def chain_points(points, max_step: int) -> list[MatchSegment]:
    """Join column-consecutive accepted points whose template step is in ``[0, max_step]``."""
    segments = []
    run = []
    for p in points:
        if run:
            pi, pj = run[-1][0], run[-1][1]
            if not (p[1] == pj + 1 and 0 <= p[0] - pi <= max_step):
                segments.append(_segment(run))
                run = []
        run.append(p)
    if run:
        segments.append(_segment(run))
    return segments


def _segment(run) -> MatchSegment:
    scores = [p[2] for p in run]
    vels = [p[3] for p in run]
    return MatchSegment(
        pairs=[(p[0], p[1]) for p in run],
        score=float(np.mean(scores)),
        velocity=float(np.median(vels)),
        pair_scores=scores,
        pair_velocities=vels,
    )


class SequenceMatcher(BaseEstimator):
    """Localise an observation within a template by sequence search.

    ``fit`` stores the template descriptors (``(m, dim)`` or a
    :class:`~artis.fhdof.DescriptorSequence`); ``predict`` returns the
    :class:`MatchSegment` list for an observation. Matrices from the last
    ``predict`` call are kept in ``similarity_`` and ``enhanced_``.
    """

    def __init__(self, ds=10, v_min=0.8, v_max=1.25, v_step=0.05,
                 uniqueness_mu=0.95, window_exclude=10, enhance_window=11):
        self.ds = ds
        self.v_min = v_min
        self.v_max = v_max
        self.v_step = v_step
        self.uniqueness_mu = uniqueness_mu
        self.window_exclude = window_exclude
        self.enhance_window = enhance_window

    def fit(self, X, y=None):
        self.template_ = check_vectors(X)
        self.n_features_in_ = self.template_.shape[1]
        return self

    def score_matrix(self, X) -> SimilarityMatrix:
        check_is_fitted(self, "template_")
        return ssd_matrix(self.template_, check_vectors(X))

    def predict(self, X) -> list[MatchSegment]:
        self.similarity_ = self.score_matrix(X)
        self.enhanced_ = enhance(self.similarity_, self.enhance_window)
        return line_search(
            self.enhanced_, self.ds, self.v_min, self.v_max, self.v_step,
            self.uniqueness_mu, self.window_exclude,
        )
