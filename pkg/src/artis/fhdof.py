"""Per-frame descriptors: feature-density histograms fused with flow magnitude.

FHDOF for the frame pair ``(k, k+1)`` is the cellwise product of

* FH: a grid counting determinant-of-Hessian keypoints of frame ``k`` per
  ``patch`` x ``patch`` block, and
* DOF: the flow magnitude ``k -> k+1`` bilinearly resampled to the same grid.

Static features vanish because their flow magnitude is zero. The PATCHNORM
descriptor (downscaled, block-standardised frames) is the sequence-matching
baseline and the fallback frame feature for rank pooling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_frames
from .exceptions import ValidationError
from .io import downscale
from .optflow import FlowParams, estimate_flow, polynomial_expansion

BOX_SIZES = (9, 15, 21)
KINDS = ("FH", "DOF", "FHDOF", "PATCHNORM")
DEFAULT_HESSIAN_THRESHOLD = 0.002


@dataclass(frozen=True)
class FeatureGrid:
    cells: np.ndarray
    kind: str

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.ndim != 2 or min(cells.shape) < 1:
            raise ValidationError(f"grid must be a non-empty 2-D matrix, got {cells.shape}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown grid kind {self.kind!r}")
        if self.kind != "PATCHNORM" and (not np.all(np.isfinite(cells)) or cells.min() < 0):
            raise ValidationError(f"{self.kind} cells must be finite and non-negative")
        object.__setattr__(self, "cells", cells)

    @property
    def grid_w(self) -> int:
        return self.cells.shape[1]

    @property
    def grid_h(self) -> int:
        return self.cells.shape[0]


@dataclass(frozen=True)
class DescriptorSequence:
    """Homogeneous stack of grids, shape ``(n, grid_h, grid_w)``."""

    grids: np.ndarray
    kind: str
    source_id: str = ""

    def __post_init__(self):
        grids = np.asarray(self.grids, dtype=np.float64)
        if grids.ndim != 3:
            raise ValidationError(f"descriptor grids must be (n, h, w), got {grids.shape}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown descriptor kind {self.kind!r}")
        object.__setattr__(self, "grids", grids)

    def __len__(self):
        return self.grids.shape[0]

    def __getitem__(self, i) -> FeatureGrid:
        return FeatureGrid(self.grids[i], self.kind)

    @property
    def grid_shape(self):
        return self.grids.shape[1:]

    def flat(self) -> np.ndarray:
        return self.grids.reshape(len(self), -1)

    @classmethod
    def from_flat(cls, vectors, grid_w: int, grid_h: int, kind: str, source_id: str = ""):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape[1] != grid_w * grid_h:
            raise ValidationError(
                f"vector dim {vectors.shape[1]} does not match grid {grid_w}x{grid_h}"
            )
        return cls(vectors.reshape(-1, grid_h, grid_w), kind, source_id)


# --- keypoints -------------------------------------------------------------


def _integral(img: np.ndarray, pad: int) -> np.ndarray:
    padded = np.pad(img, pad, mode="edge")
    ii = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    ii[1:, 1:] = padded.cumsum(0).cumsum(1)
    return ii


def _box(ii: np.ndarray, shape, pad: int, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
    """Sum over rows ``y+r0..y+r1`` and cols ``x+c0..x+c1`` for every pixel."""
    h, w = shape
    R0, R1 = pad + r0, pad + r1 + 1
    C0, C1 = pad + c0, pad + c1 + 1
    return (
        ii[R1 : R1 + h, C1 : C1 + w]
        - ii[R0 : R0 + h, C1 : C1 + w]
        - ii[R1 : R1 + h, C0 : C0 + w]
        + ii[R0 : R0 + h, C0 : C0 + w]
    )


def box_lobes(size: int):
    """Weighted rectangles ``(weight, r0, r1, c0, c1)`` of the Dxx, Dyy, Dxy box filters."""
    l = size // 3
    half = size // 2
    lw = l - 1
    dyy = [(1.0, -half, -half + l - 1, -lw, lw),
           (-2.0, -half + l, half - l, -lw, lw),
           (1.0, half - l + 1, half, -lw, lw)]
    dxx = [(w, c0, c1, r0, r1) for w, r0, r1, c0, c1 in dyy]
    dxy = [(1.0, -l, -1, -l, -1), (-1.0, -l, -1, 1, l),
           (-1.0, 1, l, -l, -1), (1.0, 1, l, 1, l)]
    return dxx, dyy, dxy


def hessian_response(frame: np.ndarray) -> np.ndarray:
    """Maximum over box sizes of the area-normalised determinant of Hessian.

    Intensities are rescaled to [0, 1] first so thresholds do not depend on
    the 8-bit range.
    """
    img = np.asarray(frame, dtype=np.float64) / 255.0
    pad = max(BOX_SIZES) // 2 + 1
    ii = _integral(img, pad)
    best = np.full(img.shape, -np.inf)
    for size in BOX_SIZES:
        area = float(size * size)
        dxx, dyy, dxy = (
            sum(w * _box(ii, img.shape, pad, *rect) for w, *rect in lobes) / area
            for lobes in box_lobes(size)
        )
        det = dxx * dyy - (0.9 * dxy) ** 2
        np.maximum(best, det, out=best)
    return best


def detect_keypoints(frame, hessian_threshold: float = DEFAULT_HESSIAN_THRESHOLD) -> np.ndarray:
    """Blob keypoints as an ``(k, 2)`` integer array of ``(x, y)`` positions.

    A pixel is a keypoint when its determinant-of-Hessian response exceeds
    ``hessian_threshold`` and is the maximum of its 3x3 neighbourhood.
    """
    frame = np.asarray(frame)
    if frame.ndim != 2 or frame.size == 0:
        raise ValidationError("detect_keypoints expects a non-empty 2-D frame")
    if hessian_threshold == math.inf:
        return np.empty((0, 2), dtype=np.intp)
    resp = hessian_response(frame)
    peak = ndimage.maximum_filter(resp, size=3, mode="nearest")
    ys, xs = np.nonzero((resp > hessian_threshold) & (resp >= peak))
    return np.stack([xs, ys], axis=1)


# --- grids -----------------------------------------------------------------


def grid_shape(frame_w: int, frame_h: int, patch: int):
    """``(grid_h, grid_w)`` for a frame tiled by ``patch``-pixel blocks."""
    if patch < 1:
        raise ValidationError("patch must be >= 1")
    return math.ceil(frame_h / patch), math.ceil(frame_w / patch)


def feature_histogram(keypoints, frame_w: int, frame_h: int, patch: int) -> FeatureGrid:
    gh, gw = grid_shape(frame_w, frame_h, patch)
    kp = np.asarray(keypoints, dtype=np.float64).reshape(-1, 2)
    if kp.size and (
        kp[:, 0].min() < 0 or kp[:, 1].min() < 0
        or kp[:, 0].max() >= frame_w or kp[:, 1].max() >= frame_h
    ):
        raise ValidationError("keypoint outside frame bounds")
    col = (kp[:, 0] // patch).astype(np.intp)
    row = (kp[:, 1] // patch).astype(np.intp)
    counts = np.bincount(row * gw + col, minlength=gh * gw).astype(np.float64)
    return FeatureGrid(counts.reshape(gh, gw), "FH")


def flow_grid(magnitude: np.ndarray, grid_w: int, grid_h: int) -> FeatureGrid:
    return FeatureGrid(np.maximum(downscale(magnitude, grid_w, grid_h), 0.0), "DOF")


def fuse(fh: FeatureGrid, flow_mag: FeatureGrid) -> FeatureGrid:
    """Schur product of a feature histogram and a flow-magnitude grid."""
    if fh.cells.shape != flow_mag.cells.shape:
        raise ValidationError(
            f"grid dimensions differ: {fh.cells.shape} vs {flow_mag.cells.shape}"
        )
    return FeatureGrid(fh.cells * flow_mag.cells, "FHDOF")


@dataclass(frozen=True)
class FHDOFParams:
    patch: int = 30
    hessian_threshold: float = DEFAULT_HESSIAN_THRESHOLD
    flow: FlowParams = field(default_factory=FlowParams)
    working_scale: float = 1.0


def build_descriptor_sequence(seq, params: FHDOFParams | None = None) -> DescriptorSequence:
    """One FHDOF grid per consecutive frame pair (``n - 1`` grids)."""
    params = params or FHDOFParams()
    frames = check_frames(seq, min_frames=2)
    n, h, w = frames.shape
    gh, gw = grid_shape(w, h, params.patch)

    if params.working_scale != 1.0:
        fw = max(int(round(w * params.working_scale)), params.flow.poly_n + 1)
        fh_ = max(int(round(h * params.working_scale)), params.flow.poly_n + 1)
        flow_frames = downscale(frames, fw, fh_)
    else:
        flow_frames = frames

    def expand(k):
        return polynomial_expansion(flow_frames[k], params.flow.window_sigma, params.flow.poly_n)

    single_level = params.flow.levels <= 1
    grids = np.empty((n - 1, gh, gw))
    nxt = expand(0) if single_level else None
    for k in range(n - 1):
        cur, nxt = nxt, (expand(k + 1) if single_level else None)
        flow = estimate_flow(
            flow_frames[k], flow_frames[k + 1], params.flow,
            expansions=(cur, nxt) if single_level else None,
        )
        fh = feature_histogram(detect_keypoints(frames[k], params.hessian_threshold), w, h, params.patch)
        grids[k] = fuse(fh, flow_grid(flow.magnitude, gw, gh)).cells
    return DescriptorSequence(grids, "FHDOF", getattr(seq, "source_id", ""))


def _standardize_blocks(grid: np.ndarray, block: int) -> np.ndarray:
    out = np.zeros_like(grid)
    gh, gw = grid.shape
    for r in range(0, gh, block):
        for c in range(0, gw, block):
            cell = grid[r : r + block, c : c + block]
            sd = cell.std()
            if sd >= 1e-6:
                out[r : r + block, c : c + block] = (cell - cell.mean()) / sd
    return out


def patchnorm_descriptor(seq, grid_w: int = 64, grid_h: int = 36, norm_patch: int = 8) -> DescriptorSequence:
    """Downscale each frame to the grid, then standardise every ``norm_patch`` block."""
    if norm_patch < 1:
        raise ValidationError("norm_patch must be >= 1")
    frames = check_frames(seq, min_frames=1)
    small = downscale(frames, grid_w, grid_h)
    grids = np.stack([_standardize_blocks(g, norm_patch) for g in small])
    return DescriptorSequence(grids, "PATCHNORM", getattr(seq, "source_id", ""))


# --- estimators ------------------------------------------------------------


class FHDOFExtractor(TransformerMixin, BaseEstimator):
    """Frames ``(n, h, w)`` -> flattened FHDOF descriptors ``(n - 1, grid_h * grid_w)``.

    Stateless apart from recording the grid geometry in :meth:`fit`.
    """

    def __init__(self, patch=30, hessian_threshold=DEFAULT_HESSIAN_THRESHOLD,
                 window_sigma=1.5, poly_n=7, iterations=3, smoothing_radius=7,
                 levels=1, working_scale=1.0):
        self.patch = patch
        self.hessian_threshold = hessian_threshold
        self.window_sigma = window_sigma
        self.poly_n = poly_n
        self.iterations = iterations
        self.smoothing_radius = smoothing_radius
        self.levels = levels
        self.working_scale = working_scale

    def _params(self) -> FHDOFParams:
        return FHDOFParams(
            patch=self.patch,
            hessian_threshold=self.hessian_threshold,
            flow=FlowParams(self.window_sigma, self.poly_n, self.iterations,
                            self.smoothing_radius, self.levels),
            working_scale=self.working_scale,
        )

    def fit(self, X, y=None):
        frames = check_frames(X)
        self.frame_shape_ = frames.shape[1:]
        self.grid_shape_ = grid_shape(frames.shape[2], frames.shape[1], self.patch)
        return self

    def transform_sequence(self, X) -> DescriptorSequence:
        return build_descriptor_sequence(X, self._params())

    def transform(self, X):
        return self.transform_sequence(X).flat()


class PatchNormExtractor(TransformerMixin, BaseEstimator):
    """Frames ``(n, h, w)`` -> flattened patch-normalised thumbnails ``(n, grid_h * grid_w)``."""

    def __init__(self, grid_w=64, grid_h=36, norm_patch=8):
        self.grid_w = grid_w
        self.grid_h = grid_h
        self.norm_patch = norm_patch

    def fit(self, X, y=None):
        check_frames(X, min_frames=1)
        self.grid_shape_ = (self.grid_h, self.grid_w)
        return self

    def transform_sequence(self, X) -> DescriptorSequence:
        return patchnorm_descriptor(X, self.grid_w, self.grid_h, self.norm_patch)

    def transform(self, X):
        return self.transform_sequence(X).flat()
