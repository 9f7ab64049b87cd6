"""Frame and feature-vector ingestion.

Two packed little-endian formats move data between pipeline stages:

ARTF (frames)::

    b"ARTF" | u32 n_frames | u32 width | u32 height | n*h*w u8, row-major, frame-major

ARTV (vectors)::

    b"ARTV" | u32 n_frames | u32 dim | n*dim f32, row-major
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import FormatError, ValidationError

ARTF_MAGIC = b"ARTF"
ARTV_MAGIC = b"ARTV"
IMAGE_SUFFIXES = (".png", ".pgm")


@dataclass(frozen=True)
class FrameSequence:
    """Ordered grayscale frames of one task execution.

    ``frames`` has shape ``(n, height, width)``; dtype is ``uint8`` for data
    read from disk and may be float for synthetic or resampled sequences.
    """

    frames: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise ValidationError(f"frames must be (n, h, w), got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise ValidationError("a frame sequence needs at least 2 frames")
        if frames.shape[1] < 1 or frames.shape[2] < 1:
            raise ValidationError("frames must be non-empty")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class FeatureVectorSequence:
    """Per-frame D-dimensional descriptors, stored as float32 like on disk."""

    vectors: np.ndarray
    source_id: str = ""
    dim: int = field(init=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValidationError(f"vectors must be (n, dim), got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValidationError("vector dimension must be >= 1")
        if not np.all(np.isfinite(vectors)):
            raise ValidationError("feature vectors contain non-finite values")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "dim", vectors.shape[1])

    def __len__(self):
        return self.vectors.shape[0]


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Luma conversion ``round(0.299 R + 0.587 G + 0.114 B)``; 2-D input is returned unchanged."""
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        return pixels.astype(np.uint8, copy=False)
    if pixels.ndim != 3 or pixels.shape[2] not in (3, 4):
        raise ValidationError(f"cannot convert array of shape {pixels.shape} to grayscale")
    rgb = pixels[..., :3].astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def _read_image(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        if im.mode in ("I;16", "I;16B", "I", "F"):
            raise ValidationError(f"{path}: only 8-bit images are supported (mode {im.mode})")
        return to_gray(np.asarray(im.convert("RGB")))


def load_frames(path, format: str | None = None, stride: int = 1) -> FrameSequence:
    """Load a frame sequence from an image directory or an ARTF file.

    ``format`` is ``"image_dir"`` or ``"packed_binary"``; when omitted it is
    inferred from whether ``path`` is a directory. ``stride`` keeps every
    stride-th frame.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    if format is None:
        format = "image_dir" if path.is_dir() else "packed_binary"
    if stride < 1:
        raise ValidationError("stride must be >= 1")

    if format == "image_dir":
        if not path.is_dir():
            raise ValidationError(f"{path} is not a directory")
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        files = files[::stride]
        if len(files) < 2:
            raise ValidationError(f"{path}: need at least 2 images, found {len(files)}")
        frames = [_read_image(f) for f in files]
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise ValidationError(f"{path}: frames differ in size: {sorted(shapes)}")
        return FrameSequence(np.stack(frames), source_id=path.name)

    if format == "packed_binary":
        frames = read_artf(path)[::stride]
        return FrameSequence(frames, source_id=path.stem)

    raise ValidationError(f"unknown frame format {format!r}")


def read_artf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != ARTF_MAGIC:
        raise FormatError(f"{path}: not an ARTF file")
    n, w, h = struct.unpack("<III", raw[4:16])
    expected = n * w * h
    payload = raw[16:]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated ARTF payload ({len(payload)} of {expected} bytes)"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after ARTF payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(n, h, w)


def save_frames(seq: FrameSequence | np.ndarray, path) -> None:
    """Write frames as ARTF. Float frames are rounded and clipped to u8."""
    frames = seq.frames if isinstance(seq, FrameSequence) else np.asarray(seq)
    if frames.dtype != np.uint8:
        frames = np.clip(np.floor(frames + 0.5), 0, 255).astype(np.uint8)
    n, h, w = frames.shape
    _atomic_write(path, ARTF_MAGIC + struct.pack("<III", n, w, h) + frames.tobytes(order="C"))


def load_feature_vectors(path) -> FeatureVectorSequence:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != ARTV_MAGIC:
        raise FormatError(f"{path}: not an ARTV file")
    n, dim = struct.unpack("<II", raw[4:12])
    if dim == 0:
        raise ValidationError(f"{path}: vector dimension is 0")
    expected = 4 * n * dim
    payload = raw[12:]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated ARTV payload ({len(payload)} of {expected} bytes)"
        )
    if len(payload) > expected:
        raise FormatError(f"{path}: {len(payload) - expected} trailing bytes after ARTV payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(n, dim).astype(np.float32)
    return FeatureVectorSequence(vectors, source_id=path.stem)


def save_feature_vectors(vectors: FeatureVectorSequence | np.ndarray, path) -> None:
    if isinstance(vectors, FeatureVectorSequence):
        arr = vectors.vectors
    else:
        arr = np.asarray(vectors)
        if arr.ndim != 2:
            raise ValidationError(f"vectors must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("refusing to write non-finite feature values")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    n, dim = arr.shape
    _atomic_write(path, ARTV_MAGIC + struct.pack("<II", n, dim) + arr.tobytes(order="C"))


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _bilinear_taps(n_in: int, n_out: int):
    # half-pixel centre alignment, edge-clamped
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def downscale(frame: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resampling to ``(out_h, out_w)``.

    Works on a single ``(h, w)`` frame or a stack ``(..., h, w)``. The result
    is float64 and is not re-quantised.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if out_w < 1 or out_h < 1:
        raise ValidationError("target dimensions must be >= 1")
    h, w = frame.shape[-2:]
    if (h, w) == (out_h, out_w):
        return frame.copy()
    r0, r1, fr = _bilinear_taps(h, out_h)
    c0, c1, fc = _bilinear_taps(w, out_w)
    rows = frame[..., r0, :] * (1.0 - fr)[:, None] + frame[..., r1, :] * fr[:, None]
    return rows[..., c0] * (1.0 - fc) + rows[..., c1] * fc
