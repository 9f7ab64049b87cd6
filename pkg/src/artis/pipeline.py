"""Glue between configuration, estimators and on-disk artefacts."""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from pathlib import Path

import numpy as np

from .config import RunConfig
from .exceptions import ValidationError
from .fhdof import FHDOFExtractor, PatchNormExtractor
from .io import save_feature_vectors
from .seqmatch import MatchSegment, SequenceMatcher
from .tpdf import TPDFMatcher

METHODS = ("fhdof", "patchnorm-baseline", "tpdf")


def fhdof_extractor(cfg: RunConfig) -> FHDOFExtractor:
    return FHDOFExtractor(
        patch=cfg.patch, hessian_threshold=cfg.hessian_threshold,
        window_sigma=cfg.window_sigma, poly_n=cfg.poly_n, iterations=cfg.iterations,
        smoothing_radius=cfg.smoothing_radius, levels=cfg.levels,
        working_scale=cfg.working_scale,
    )


def patchnorm_extractor(cfg: RunConfig) -> PatchNormExtractor:
    return PatchNormExtractor(grid_w=cfg.grid_w, grid_h=cfg.grid_h, norm_patch=cfg.norm_patch)


def sequence_matcher(cfg: RunConfig) -> SequenceMatcher:
    return SequenceMatcher(
        ds=cfg.ds, v_min=cfg.v_min, v_max=cfg.v_max, v_step=cfg.v_step,
        uniqueness_mu=cfg.uniqueness_mu, window_exclude=cfg.window_exclude,
        enhance_window=cfg.enhance_window,
    )


def tpdf_matcher(cfg: RunConfig) -> TPDFMatcher:
    return TPDFMatcher(
        window=cfg.window, method=cfg.pooling, gap_max=cfg.gap_max, n_chains=cfg.n_chains,
        threshold_k=cfg.threshold_k, C=cfg.ranksvm_c, iterations=cfg.ranksvm_iterations,
    )


def run_match(template: np.ndarray, observation: np.ndarray, method: str, cfg: RunConfig):
    """Match two descriptor/feature arrays; returns ``(segments, matrices)``.

    ``matrices`` maps a stage name to the score matrix for dumping.
    """
    if method in ("fhdof", "patchnorm-baseline"):
        m = sequence_matcher(cfg).fit(template)
        segments = m.predict(observation)
        return segments, {"raw": m.similarity_.scores, "enhanced": m.enhanced_.scores}
    if method == "tpdf":
        m = tpdf_matcher(cfg).fit(template)
        segments = m.predict(observation)
        A = m.similarity_.scores
        thresholded = np.where(A > m.candidates_.threshold, A, 0.0)
        return segments, {"raw": A, "thresholded": thresholded}
    raise ValidationError(f"unknown match method {method!r}; choose from {METHODS}")


def matches_csv(segments) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["template_index", "observation_index", "score", "segment_id"])
    for sid, seg in enumerate(segments):
        scores = seg.pair_scores or [seg.score] * len(seg)
        for (i, j), s in zip(seg.pairs, scores):
            w.writerow([i, j, f"{s:.9g}", sid])
    return buf.getvalue()


def read_matches(path) -> list[MatchSegment]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such matches file: {path}")
    runs = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"template_index", "observation_index", "score", "segment_id"}
        if not need <= set(reader.fieldnames or ()):
            raise ValidationError(f"{path}: expected columns {sorted(need)}")
        for row in reader:
            try:
                runs[int(row["segment_id"])].append(
                    (int(row["template_index"]), int(row["observation_index"]), float(row["score"]))
                )
            except ValueError as exc:
                raise ValidationError(f"{path}: malformed row {row}") from exc
    return [
        MatchSegment([(i, j) for i, j, _ in run], score=float(np.mean([s for *_, s in run])),
                     pair_scores=[s for *_, s in run])
        for _, run in sorted(runs.items())
    ]


def pgm_bytes(matrix: np.ndarray) -> bytes:
    """8-bit binary PGM of a min-max scaled matrix (rows = template)."""
    M = np.asarray(matrix, dtype=np.float64)
    lo, hi = M.min(), M.max()
    scaled = (M - lo) / (hi - lo) if hi > lo else np.zeros_like(M)
    pix = np.floor(scaled * 255.0 + 0.5).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def write_match_outputs(out_dir, segments, matrices, cfg: RunConfig) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "matches.csv").write_text(matches_csv(segments))
    for name, M in matrices.items():
        save_feature_vectors(M.astype(np.float32), out / f"similarity_{name}.artv")
        (out / f"similarity_{name}.pgm").write_bytes(pgm_bytes(M))
    (out / "config.txt").write_text(cfg.to_text())
