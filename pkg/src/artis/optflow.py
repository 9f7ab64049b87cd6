"""Dense two-frame optical flow by polynomial expansion (Farnebäck).

Each pixel neighbourhood is approximated by a quadratic
``f(x) ~ x^T A x + b^T x + c`` fitted with Gaussian-weighted least squares.
For a translated signal ``f2(x) = f1(x - d)`` the linear coefficients satisfy
``b2 = b1 - 2 A d``, which gives ``d = -1/2 A^-1 (b2 - b1)``. The estimate is
refined by warping the second expansion along the current displacement and
solving the normal equations pooled over a Gaussian neighbourhood.

Coordinates: ``x`` is the column offset, ``y`` the row offset. Flow vectors
are stored as ``(dx, dy)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import ValidationError

TIKHONOV = 1e-6

# basis order: 1, x, y, x^2, y^2, xy  as (power of x, power of y)
_BASIS = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))


@dataclass(frozen=True)
class FlowParams:
    window_sigma: float = 1.5
    poly_n: int = 7
    iterations: int = 3
    smoothing_radius: int = 7
    levels: int = 1


@dataclass(frozen=True)
class PolyExpansion:
    """Per-pixel quadratic coefficients; ``A`` is (H, W, 2, 2), ``b`` (H, W, 2), ``c`` (H, W)."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class FlowField:
    magnitude: np.ndarray
    direction: np.ndarray
    dx: np.ndarray
    dy: np.ndarray


def _applicability(poly_n: int, sigma: float):
    r = poly_n // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    a = np.exp(-(x**2) / (2.0 * sigma**2))
    return x, a / a.sum()


def expansion_gram(window_sigma: float = 1.5, poly_n: int = 7) -> np.ndarray:
    """Normal-equation matrix of the weighted quadratic fit (identical at every pixel)."""
    x, a = _applicability(poly_n, window_sigma)
    X, Y = np.meshgrid(x, x)  # X varies along columns
    W = np.outer(a, a)
    B = np.stack([X**p * Y**q for p, q in _BASIS], axis=-1).reshape(-1, 6)
    return (B * W.reshape(-1, 1)).T @ B


def polynomial_expansion(frame, window_sigma: float = 1.5, poly_n: int = 7) -> PolyExpansion:
    """Fit a quadratic to every pixel's ``poly_n`` x ``poly_n`` neighbourhood.

    Borders are handled by edge replication, so every pixel sees a full
    window and the normal equations are the same everywhere.
    """
    if poly_n < 3 or poly_n % 2 == 0:
        raise ValidationError("poly_n must be an odd integer >= 3")
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2:
        raise ValidationError("polynomial_expansion expects a 2-D frame")
    x, a = _applicability(poly_n, window_sigma)

    along_x = {
        p: ndimage.correlate1d(f, a * x**p, axis=1, mode="nearest") for p in (0, 1, 2)
    }
    r = np.stack(
        [ndimage.correlate1d(along_x[p], a * x**q, axis=0, mode="nearest") for p, q in _BASIS],
        axis=-1,
    )
    G = expansion_gram(window_sigma, poly_n)
    if np.linalg.cond(G) > 1e12:
        G = G + TIKHONOV * np.eye(6)
    theta = r @ np.linalg.inv(G).T

    A = np.empty(f.shape + (2, 2))
    A[..., 0, 0] = theta[..., 3]
    A[..., 1, 1] = theta[..., 4]
    A[..., 0, 1] = A[..., 1, 0] = theta[..., 5] / 2.0
    return PolyExpansion(A=A, b=theta[..., 1:3].copy(), c=theta[..., 0].copy())


def _warp(arr: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    h, w = dx.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [rows + dy, cols + dx]
    flat = arr.reshape(h, w, -1)
    out = np.empty_like(flat)
    for k in range(flat.shape[-1]):
        out[..., k] = ndimage.map_coordinates(flat[..., k], coords, order=1, mode="nearest")
    return out.reshape(arr.shape)


def _flow_from_expansions(e1: PolyExpansion, e2: PolyExpansion, params: FlowParams, d0=None):
    h, w = e1.c.shape
    if d0 is None:
        dx = np.zeros((h, w))
        dy = np.zeros((h, w))
    else:
        dx, dy = d0
    sigma = max(params.smoothing_radius, 1) / 2.0

    for it in range(max(params.iterations, 1)):
        if it == 0 and d0 is None:
            A2, b2 = e2.A, e2.b
        else:
            A2 = _warp(e2.A, dx, dy)
            b2 = _warp(e2.b, dx, dy)
        A = 0.5 * (e1.A + A2)
        db = -0.5 * (b2 - e1.b)
        db[..., 0] += A[..., 0, 0] * dx + A[..., 0, 1] * dy
        db[..., 1] += A[..., 1, 0] * dx + A[..., 1, 1] * dy

        a11, a12, a22 = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
        # A is symmetric: G = A^T A, h = A^T db
        terms = np.stack(
            [
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a12 * a12 + a22 * a22,
                a11 * db[..., 0] + a12 * db[..., 1],
                a12 * db[..., 0] + a22 * db[..., 1],
            ]
        )
        if params.smoothing_radius > 0:
            terms = np.stack(
                [
                    ndimage.gaussian_filter(t, sigma, mode="nearest", truncate=2.0)
                    for t in terms
                ]
            )
        g11, g12, g22, h1, h2 = terms
        g11 = g11 + TIKHONOV
        g22 = g22 + TIKHONOV
        det = g11 * g22 - g12 * g12
        dx = (g22 * h1 - g12 * h2) / det
        dy = (g11 * h2 - g12 * h1) / det
    return dx, dy


def estimate_flow(prev, next, params: FlowParams | None = None, *, expansions=None) -> FlowField:
    """Dense displacement field from ``prev`` to ``next``.

    ``expansions`` may carry precomputed ``(PolyExpansion, PolyExpansion)`` for
    the two frames (single-level runs only) so sequences expand each frame once.
    """
    params = params or FlowParams()
    prev = np.asarray(prev, dtype=np.float64)
    next = np.asarray(next, dtype=np.float64)
    if prev.shape != next.shape:
        raise ValidationError(f"frame shapes differ: {prev.shape} vs {next.shape}")
    if min(prev.shape) <= params.poly_n:
        raise ValidationError("frame dimensions must exceed poly_n")

    if params.levels <= 1:
        if expansions is None:
            expansions = (
                polynomial_expansion(prev, params.window_sigma, params.poly_n),
                polynomial_expansion(next, params.window_sigma, params.poly_n),
            )
        dx, dy = _flow_from_expansions(*expansions, params)
    else:
        dx, dy = _pyramid_flow(prev, next, params)

    return FlowField(
        magnitude=np.hypot(dx, dy),
        direction=np.arctan2(dy, dx),
        dx=dx,
        dy=dy,
    )


def _pyramid_flow(prev, next, params: FlowParams):
    pyr = [(prev, next)]
    for _ in range(params.levels - 1):
        p, n = pyr[-1]
        if min(p.shape) // 2 <= params.poly_n:
            break
        smooth = lambda im: ndimage.gaussian_filter(im, 1.0, mode="nearest")
        pyr.append((smooth(p)[::2, ::2], smooth(n)[::2, ::2]))

    d = None
    for p, n in reversed(pyr):
        if d is not None:
            h, w = p.shape
            zoom = (h / d[0].shape[0], w / d[0].shape[1])
            d = tuple(
                2.0 * ndimage.zoom(comp, zoom, order=1, mode="nearest", grid_mode=True)[:h, :w]
                for comp in d
            )
        e1 = polynomial_expansion(p, params.window_sigma, params.poly_n)
        e2 = polynomial_expansion(n, params.window_sigma, params.poly_n)
        d = _flow_from_expansions(e1, e2, params, d0=d)
    return d
