"""Temporally pooled features: rank pooling, cosine matching, consistent chains."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_vectors
from .exceptions import ValidationError
from .seqmatch import MatchSegment, SimilarityMatrix

METHODS = ("approx", "ranksvm")


@dataclass(frozen=True)
class PooledSequence:
    pooled: np.ndarray
    window: int
    method: str

    def __len__(self):
        return self.pooled.shape[0]


@dataclass(frozen=True)
class CandidateSet:
    """Index pairs whose similarity strictly exceeds ``threshold``.

    ``i``, ``j`` and ``similarity`` are parallel 1-D arrays.
    """

    i: np.ndarray
    j: np.ndarray
    similarity: np.ndarray
    threshold: float

    def __post_init__(self):
        if self.similarity.size and not np.all(self.similarity > self.threshold):
            raise ValidationError("candidate similarity does not exceed the threshold")

    def __len__(self):
        return self.similarity.shape[0]

    @classmethod
    def from_triples(cls, triples, threshold: float = -np.inf):
        arr = np.asarray(list(triples), dtype=np.float64).reshape(-1, 3)
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], threshold)


# --- rank pooling ----------------------------------------------------------


def approx_coefficients(window: int) -> np.ndarray:
    """``alpha_t = 2t - W - 1`` for ``t = 1..W``."""
    t = np.arange(1, window + 1)
    return (2 * t - window - 1).astype(np.float64)


def _approx_pool(windows: np.ndarray) -> np.ndarray:
    """Approximate rank pooling of ``(..., W, D)`` windows.

    Summed as ``sum_t alpha_{W+1-t} (v_{W+1-t} - v_t)`` over the first half
    so constant windows give exactly zero and time reversal exact negation.
    """
    W = windows.shape[-2]
    alpha = approx_coefficients(W)
    out = np.zeros(windows.shape[:-2] + windows.shape[-1:])
    for t in range(W // 2):
        out += alpha[W - 1 - t] * (windows[..., W - 1 - t, :] - windows[..., t, :])
    return out


def time_varying_mean(vectors: np.ndarray) -> np.ndarray:
    return np.cumsum(vectors, axis=0) / np.arange(1, len(vectors) + 1)[:, None]


def ranking_objective(u: np.ndarray, means: np.ndarray, C: float = 1e-3) -> float:
    """Pairwise hinge ranking loss plus ``C * ||u||^2``."""
    s = means @ u
    later, earlier = np.triu_indices(len(s), k=1)[::-1]
    return float(np.maximum(0.0, 1.0 - (s[later] - s[earlier])).sum() + C * u @ u)


def _ranksvm(window: np.ndarray, C: float, iterations: int) -> np.ndarray:
    means = time_varying_mean(window)
    W = len(means)
    earlier, later = np.triu_indices(W, k=1)
    diffs = means[later] - means[earlier]
    scale = np.median(np.linalg.norm(diffs, axis=1))
    if scale == 0.0:
        return np.zeros(window.shape[1])
    step0 = 1.0 / scale

    u = np.zeros(window.shape[1])
    best_u, best_obj = u.copy(), ranking_objective(u, means, C)
    for k in range(iterations):
        s = means @ u
        active = (1.0 - (s[later] - s[earlier])) > 0
        # gradient of the hinge sum via per-frame counts: -M^T c
        c = np.bincount(later[active], minlength=W) - np.bincount(earlier[active], minlength=W)
        g = -(means.T @ c) + 2.0 * C * u
        gn = np.linalg.norm(g)
        if gn == 0.0:
            break
        u = u - (step0 / np.sqrt(k + 1.0)) * g / gn
        obj = ranking_objective(u, means, C)
        if obj < best_obj:
            best_u, best_obj = u.copy(), obj
    return best_u


def rank_pool(window_vectors, method: str = "approx", C: float = 1e-3, iterations: int = 300) -> np.ndarray:
    """Encode the temporal order of ``W`` vectors as one D-vector.

    ``approx`` uses the closed-form coefficients ``2t - W - 1``; ``ranksvm``
    fits a linear ranker to the time-varying means by subgradient descent
    (zero start, fixed step schedule, best iterate kept), so both are
    deterministic.
    """
    V = check_vectors(window_vectors)
    if len(V) < 2:
        raise ValidationError("rank pooling needs at least 2 vectors")
    if method == "approx":
        return _approx_pool(V)
    if method == "ranksvm":
        return _ranksvm(V, C, iterations)
    raise ValidationError(f"unknown pooling method {method!r}")


def pool_sequence(features, window: int = 20, method: str = "approx", C: float = 1e-3,
                  iterations: int = 300) -> PooledSequence:
    """Pool windows ``v_k .. v_{k+W-1}`` for ``k = 1 .. n - W``."""
    V = check_vectors(features)
    if window < 2:
        raise ValidationError("window must be >= 2")
    if len(V) <= window:
        raise ValidationError(f"sequence of {len(V)} vectors is too short for window {window}")
    count = len(V) - window
    windows = sliding_window_view(V, window, axis=0)[:count]  # (count, D, W)
    windows = np.swapaxes(windows, 1, 2)
    if method == "approx":
        pooled = _approx_pool(windows)
    elif method == "ranksvm":
        pooled = np.stack([_ranksvm(w, C, iterations) for w in windows])
    else:
        raise ValidationError(f"unknown pooling method {method!r}")
    return PooledSequence(pooled, window, method)


# --- matching --------------------------------------------------------------


def _unit_rows(P: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(P, axis=1, keepdims=True)
    out = np.zeros_like(P)
    np.divide(P, norms, out=out, where=norms > 0)
    return out


def cosine_similarity_matrix(Pa, Pb) -> SimilarityMatrix:
    """Cosine similarity of L2-normalised rows; zero vectors score 0 against everything."""
    a = check_vectors(getattr(Pa, "pooled", Pa))
    b = check_vectors(getattr(Pb, "pooled", Pb))
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    A = np.clip(_unit_rows(a) @ _unit_rows(b).T, -1.0, 1.0)
    return SimilarityMatrix(A, "similarity", "raw")


def adaptive_threshold(A: SimilarityMatrix, k: float = 0.5) -> CandidateSet:
    """Keep entries above ``mean(A) + k * std(A)`` (population std)."""
    if A.polarity != "similarity":
        raise ValidationError("adaptive_threshold expects a similarity-polarity matrix")
    S = A.scores
    T = float(S.mean() + k * S.std())
    i, j = np.nonzero(S > T)
    return CandidateSet(i.astype(np.int64), j.astype(np.int64), S[i, j], T)


def max_weight_chain(cands: CandidateSet):
    """Maximum-weight chain strictly increasing in both indices.

    Returns ``(indices into cands, weight)``. Rows are swept in order; for
    each candidate the best chain ending in an earlier row and an earlier
    column is read off a prefix maximum over columns, so the cost is
    ``O(rows * cols)`` vectorised rather than quadratic in candidates.
    """
    if len(cands) == 0:
        return [], 0.0
    i, j, w = cands.i, cands.j, cands.similarity
    cols, jr = np.unique(j, return_inverse=True)
    ncol = len(cols)
    order = np.lexsort((jr, i))

    col_best = np.full(ncol, -np.inf)
    col_id = np.full(ncol, -1, dtype=np.int64)
    best = np.empty(len(w))
    prev = np.full(len(w), -1, dtype=np.int64)
    pos = np.arange(ncol)

    bounds = np.flatnonzero(np.diff(i[order])) + 1
    for rows in np.split(order, bounds):
        # prefix max over columns strictly left of each candidate
        pmax = np.maximum.accumulate(col_best)
        last = np.maximum.accumulate(np.where(col_best == pmax, pos, -1))
        c = jr[rows]
        left_val = np.where(c > 0, pmax[np.maximum(c - 1, 0)], -np.inf)
        left_id = np.where(c > 0, col_id[last[np.maximum(c - 1, 0)]], -1)
        extend = left_val > 0
        best[rows] = w[rows] + np.where(extend, left_val, 0.0)
        prev[rows] = np.where(extend, left_id, -1)
        # commit after the whole row so same-row candidates never chain
        upd = best[rows] > col_best[c]
        col_best[c[upd]] = best[rows][upd]
        col_id[c[upd]] = rows[upd]

    end = int(np.argmax(best))
    chain = []
    k = end
    while k >= 0:
        chain.append(k)
        k = int(prev[k])
    chain.reverse()
    return chain, float(best[end])


def consistent_chain(cands: CandidateSet, gap_max: int = 20) -> list[MatchSegment]:
    """Best temporally consistent chain, split where either index jumps by more than ``gap_max``."""
    chain, _ = max_weight_chain(cands)
    segments, run = [], []
    for k in chain:
        if run:
            pk = run[-1]
            if cands.i[k] - cands.i[pk] > gap_max or cands.j[k] - cands.j[pk] > gap_max:
                segments.append(_chain_segment(cands, run))
                run = []
        run.append(k)
    if run:
        segments.append(_chain_segment(cands, run))
    return segments


def _chain_segment(cands, run) -> MatchSegment:
    pairs = [(int(cands.i[k]), int(cands.j[k])) for k in run]
    sims = [float(cands.similarity[k]) for k in run]
    vel = np.nan
    if len(pairs) > 1:
        di = pairs[-1][0] - pairs[0][0]
        dj = pairs[-1][1] - pairs[0][1]
        vel = di / dj
    return MatchSegment(pairs, score=float(np.sum(sims)), velocity=float(vel),
                        pair_scores=sims, pair_velocities=[vel] * len(pairs))


def _drop_spans(cands: CandidateSet, segments) -> CandidateSet:
    keep = np.ones(len(cands), dtype=bool)
    for s in segments:
        (i0, j0), (i1, j1) = s.pairs[0], s.pairs[-1]
        keep &= ~((cands.i >= i0) & (cands.i <= i1))
        keep &= ~((cands.j >= j0) & (cands.j <= j1))
    return CandidateSet(cands.i[keep], cands.j[keep], cands.similarity[keep], cands.threshold)


def shift_segments(segments, offset: int) -> list[MatchSegment]:
    return [
        MatchSegment([(i + offset, j + offset) for i, j in s.pairs], s.score, s.velocity,
                     list(s.pair_scores), list(s.pair_velocities))
        for s in segments
    ]


# --- estimators ------------------------------------------------------------


class RankPooler(TransformerMixin, BaseEstimator):
    """Per-frame vectors ``(n, D)`` -> rank-pooled windows ``(n - window, D)``."""

    def __init__(self, window=20, method="approx", C=1e-3, iterations=300):
        self.window = window
        self.method = method
        self.C = C
        self.iterations = iterations

    def fit(self, X, y=None):
        self.n_features_in_ = check_vectors(X).shape[1]
        return self

    def transform(self, X):
        return pool_sequence(X, self.window, self.method, self.C, self.iterations).pooled


class TPDFMatcher(BaseEstimator):
    """Match per-frame feature sequences via rank pooling and consistent chains.

    ``predict`` returns segments in frame indices: pooled window ``k`` is
    reported at its centre frame ``k + (window - 1) // 2``. With
    ``n_chains > 1`` further chains are extracted after removing candidates
    in the row and column spans of the segments already found.
    """

    def __init__(self, window=20, method="approx", gap_max=20, n_chains=1,
                 threshold_k=0.5, C=1e-3, iterations=300):
        self.window = window
        self.method = method
        self.gap_max = gap_max
        self.n_chains = n_chains
        self.threshold_k = threshold_k
        self.C = C
        self.iterations = iterations

    def _pool(self, X):
        return pool_sequence(X, self.window, self.method, self.C, self.iterations)

    def fit(self, X, y=None):
        X = check_vectors(X)
        self.n_features_in_ = X.shape[1]
        self.template_pooled_ = self._pool(X)
        return self

    def score_matrix(self, X) -> SimilarityMatrix:
        check_is_fitted(self, "template_pooled_")
        return cosine_similarity_matrix(self.template_pooled_, self._pool(X))

    def predict(self, X) -> list[MatchSegment]:
        self.similarity_ = self.score_matrix(X)
        cands = adaptive_threshold(self.similarity_, self.threshold_k)
        self.candidates_ = cands
        segments = []
        for _ in range(max(int(self.n_chains), 1)):
            found = consistent_chain(cands, self.gap_max)
            if not found:
                break
            segments.extend(found)
            cands = _drop_spans(cands, found)
        segments.sort(key=lambda s: s.pairs[0][1])
        return shift_segments(segments, (self.window - 1) // 2)
