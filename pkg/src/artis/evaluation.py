"""Class-coverage evaluation of match output against labelled action segments.

Every (template segment, observation segment) pair spans a rectangle in the
index plane. Rectangles with equal labels are within-class areas (potential
true positives), the rest between-class areas (potential false positives).
An area's coverage is the number of matched points inside it divided by the
shorter of its two segment lengths; an area counts as a hit when its coverage
is strictly greater than the threshold.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ValidationError

DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.0, 1.0001, 0.05), 2))


@dataclass(frozen=True)
class GroundTruthSegment:
    action_label: str
    start_frame: int
    end_frame: int
    sequence_id: str = ""

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame < self.start_frame:
            raise ValidationError(
                f"invalid segment {self.action_label!r}: [{self.start_frame}, {self.end_frame}]"
            )

    def __len__(self):
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class CorrespondenceArea:
    template_segment: GroundTruthSegment
    observation_segment: GroundTruthSegment

    @property
    def kind(self) -> str:
        same = self.template_segment.action_label == self.observation_segment.action_label
        return "within_class" if same else "between_class"


@dataclass
class EvalReport:
    rows: list  # dicts: threshold, tp, fp, fn, precision, recall, f1
    n_classes: int
    n_within: int
    n_between: int
    coverages: list = field(default_factory=list)

    def best(self) -> dict:
        """Row with maximal F1 (lowest threshold among ties)."""
        return max(self.rows, key=lambda r: (r["f1"], -r["threshold"]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# classes={self.n_classes} within_areas={self.n_within} "
            f"between_areas={self.n_between}\n"
        )
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "tp", "fp", "fn", "precision", "recall", "f1"])
        for r in self.rows:
            w.writerow(_fmt_row(r, r["threshold"]))
        b = self.best()
        w.writerow(_fmt_row(b, f"max_f1@{b['threshold']:g}"))
        return buf.getvalue()


def _fmt_row(r, label):
    return [label if isinstance(label, str) else f"{label:g}", r["tp"], r["fp"], r["fn"],
            f"{r['precision']:.6f}", f"{r['recall']:.6f}", f"{r['f1']:.6f}"]


def validate_segments(segments) -> list[GroundTruthSegment]:
    segs = sorted(segments, key=lambda s: (s.sequence_id, s.start_frame))
    for a, b in zip(segs, segs[1:]):
        if a.sequence_id == b.sequence_id and b.start_frame <= a.end_frame:
            raise ValidationError(
                f"overlapping segments {a.action_label!r} [{a.start_frame}, {a.end_frame}] "
                f"and {b.action_label!r} [{b.start_frame}, {b.end_frame}]"
            )
    return segs


def load_labels(path, sequence_id: str | None = None) -> list[GroundTruthSegment]:
    """Read a label CSV with header ``action,start_frame,end_frame``.

    An optional ``sequence_id`` column must match ``sequence_id`` (defaults
    to the file stem) on every row.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such label file: {path}")
    expected_id = sequence_id if sequence_id is not None else path.stem
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
        missing = {"action", "start_frame", "end_frame"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {sorted(missing)}")
        segs = []
        for line, row in enumerate(reader, start=2):
            sid = row.get("sequence_id")
            if sid not in (None, "") and sid != expected_id:
                raise ValidationError(f"{path}:{line}: unknown sequence_id {sid!r}")
            try:
                start, end = int(row["start_frame"]), int(row["end_frame"])
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{line}: bad frame index") from exc
            segs.append(GroundTruthSegment(row["action"].strip(), start, end, expected_id))
    return validate_segments(segs)


def save_labels(segments, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["action", "start_frame", "end_frame"])
        for s in segments:
            w.writerow([s.action_label, s.start_frame, s.end_frame])


def build_areas(temp_labels, obs_labels) -> list[CorrespondenceArea]:
    if not temp_labels or not obs_labels:
        raise ValidationError("both label sets must be non-empty")
    return [CorrespondenceArea(t, o) for t in temp_labels for o in obs_labels]


def _pair_array(matches) -> np.ndarray:
    pairs = set()
    for m in matches:
        pairs.update(getattr(m, "pairs", [m]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def coverage_ratio(matches, area: CorrespondenceArea) -> float:
    """Matched points inside the area over the shorter segment length.

    ``matches`` is a list of :class:`~artis.seqmatch.MatchSegment` or of
    ``(template_index, observation_index)`` pairs; duplicates count once.
    """
    pts = matches if isinstance(matches, np.ndarray) else _pair_array(matches)
    t, o = area.template_segment, area.observation_segment
    if pts.size == 0:
        return 0.0
    inside = (
        (pts[:, 0] >= t.start_frame) & (pts[:, 0] <= t.end_frame)
        & (pts[:, 1] >= o.start_frame) & (pts[:, 1] <= o.end_frame)
    )
    return int(inside.sum()) / min(len(t), len(o))


def prf(tp: int, fp: int, fn: int):
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def score(matches, areas, thresholds=DEFAULT_THRESHOLDS) -> EvalReport:
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds):
        raise ValidationError("thresholds must be sorted ascending")
    pts = _pair_array(matches)
    cov = np.array([coverage_ratio(pts, a) for a in areas])
    within = np.array([a.kind == "within_class" for a in areas], dtype=bool)
    rows = []
    for th in thresholds:
        hit = cov > th
        tp = int(np.sum(hit & within))
        fp = int(np.sum(hit & ~within))
        fn = int(np.sum(~hit & within))
        p, r, f = prf(tp, fp, fn)
        rows.append(dict(threshold=float(th), tp=tp, fp=fp, fn=fn, precision=p, recall=r, f1=f))
    labels = {a.template_segment.action_label for a in areas}
    labels |= {a.observation_segment.action_label for a in areas}
    return EvalReport(
        rows=rows,
        n_classes=len(labels),
        n_within=int(within.sum()),
        n_between=int((~within).sum()),
        coverages=[(a, float(c)) for a, c in zip(areas, cov)],
    )


def coverage_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["template_action", "template_start", "template_end",
                "observation_action", "observation_start", "observation_end", "kind", "coverage"])
    for a, c in report.coverages:
        t, o = a.template_segment, a.observation_segment
        w.writerow([t.action_label, t.start_frame, t.end_frame,
                    o.action_label, o.start_frame, o.end_frame, a.kind, f"{c:.6f}"])
    return buf.getvalue()


def read_report_best(path) -> dict:
    """Return the ``max_f1@`` summary row of a report CSV as a dict."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such report: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        for row in reader:
            if row["threshold"].startswith("max_f1@"):
                return dict(threshold=float(row["threshold"].split("@", 1)[1]),
                            precision=float(row["precision"]), recall=float(row["recall"]),
                            f1=float(row["f1"]))
    raise ValidationError(f"{path}: no max_f1 summary row")


def summary_table(named_reports) -> str:
    """``name,threshold,precision,recall,f1`` from ``(name, report path)`` pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "threshold", "precision", "recall", "f1"])
    for name, path in named_reports:
        b = read_report_best(path)
        w.writerow([name, f"{b['threshold']:g}", f"{b['precision']:.2f}",
                    f"{b['recall']:.2f}", f"{b['f1']:.2f}"])
    return buf.getvalue()


def convert_labels(rows, action_col, start_col, end_col, fps=None, one_based=False):
    """Map rows of an external annotation table to validated segments.

    With ``fps`` the start/end columns are seconds and become frames by
    ``floor(t * fps)``; ``one_based`` shifts 1-based frame numbers down.
    """
    segs = []
    for k, row in enumerate(rows, start=1):
        try:
            a, s, e = row[action_col], row[start_col], row[end_col]
            if fps is not None:
                s, e = int(np.floor(float(s) * fps)), int(np.floor(float(e) * fps))
            else:
                s, e = int(s), int(e)
        except (KeyError, IndexError, ValueError) as exc:
            raise ValidationError(f"annotation row {k}: {exc}") from exc
        if one_based:
            s, e = s - 1, e - 1
        segs.append(GroundTruthSegment(str(a).strip(), s, e))
    return validate_segments(segs)
