import pytest

from artis.evaluation import (
    CorrespondenceArea, GroundTruthSegment as G, build_areas, convert_labels, coverage_ratio,
    load_labels, prf, read_report_best, save_labels, score, summary_table,
)
from artis.exceptions import ValidationError
from artis.seqmatch import MatchSegment


def _area(t, o):
    return CorrespondenceArea(G(*t), G(*o))


def test_prf_example():
    p, r, f = prf(3, 1, 2)
    assert (p, r) == (0.75, 0.6)
    assert f == pytest.approx(2 * 0.75 * 0.6 / 1.35, abs=1e-12)
    assert round(f, 4) == 0.6667


def test_prf_degenerate():
    assert prf(0, 0, 0) == (1.0, 0.0, 0.0)
    assert prf(0, 0, 3) == (1.0, 0.0, 0.0)


def test_coverage_examples():
    a = _area(("x", 0, 9), ("x", 0, 19))
    assert coverage_ratio([(k, k) for k in range(5)], a) == 0.5
    assert coverage_ratio([], a) == 0.0
    sq = _area(("x", 0, 9), ("x", 0, 9))
    assert coverage_ratio([MatchSegment([(k, k) for k in range(10)], 0.0)], sq) == 1.0


def test_coverage_dedups_and_clips():
    a = _area(("x", 5, 9), ("x", 5, 9))
    pts = [(5, 5), (5, 5), (6, 6), (20, 6), (4, 5)]
    assert coverage_ratio(pts, a) == 2 / 5


def test_six_class_areas():
    labels = [G(f"c{k}", 10 * k, 10 * k + 9) for k in range(6)]
    areas = build_areas(labels, labels)
    kinds = [a.kind for a in areas]
    assert kinds.count("within_class") == 6
    assert kinds.count("between_class") == 30


def test_repeated_labels_are_separate_areas():
    t = [G("a", 0, 9), G("b", 10, 19), G("a", 20, 29)]
    o = [G("a", 0, 9), G("b", 10, 19)]
    areas = build_areas(t, o)
    assert sum(a.kind == "within_class" for a in areas) == 3


def test_build_areas_requires_labels():
    with pytest.raises(ValidationError):
        build_areas([], [G("a", 0, 1)])


def test_disjoint_labels_give_zero_recall():
    rep = score([(0, 0)], build_areas([G("a", 0, 9)], [G("b", 0, 9)]), [0.0])
    assert rep.rows[0]["recall"] == 0.0 and rep.n_within == 0


def test_score_threshold_strict():
    areas = build_areas([G("a", 0, 9)], [G("a", 0, 9)])
    rep = score([(k, k) for k in range(5)], areas, [0.45, 0.5, 0.55])
    assert [r["tp"] for r in rep.rows] == [1, 0, 0]


def test_score_theta_zero_precision_floor():
    t = [G("a", 0, 9), G("b", 10, 19)]
    pts = [(i, j) for i in (0, 15) for j in (0, 15)]
    rep = score(pts, build_areas(t, t), [0.0])
    r = rep.rows[0]
    assert r["recall"] == 1.0 and r["precision"] == 2 / 4


def test_score_monotone_and_counts(rng):
    t = [G(f"c{k}", 10 * k, 10 * k + 9) for k in range(4)]
    pts = [(int(rng.integers(0, 40)), int(rng.integers(0, 40))) for _ in range(120)]
    rep = score(pts, build_areas(t, t))
    tps = [r["tp"] for r in rep.rows]
    fps = [r["fp"] for r in rep.rows]
    assert tps == sorted(tps, reverse=True) and fps == sorted(fps, reverse=True)
    for r in rep.rows:
        assert r["tp"] + r["fn"] == rep.n_within
        assert 0 <= r["precision"] <= 1 and 0 <= r["f1"] <= 1


def test_score_rejects_unsorted():
    with pytest.raises(ValidationError):
        score([], build_areas([G("a", 0, 1)], [G("a", 0, 1)]), [0.5, 0.1])


def test_perfect_alignment_f1_one():
    t = [G(f"c{k}", 10 * k, 10 * k + 9) for k in range(3)]
    rep = score([MatchSegment([(k, k) for k in range(30)], 0.0)], build_areas(t, t), [0.5])
    assert rep.rows[0]["f1"] == 1.0


def test_label_io_roundtrip(tmp_path):
    segs = [G("attach_legs", 0, 99), G("spin_legs", 100, 250)]
    save_labels(segs, tmp_path / "run.csv")
    back = load_labels(tmp_path / "run.csv")
    assert [(s.action_label, s.start_frame, s.end_frame) for s in back] == [
        ("attach_legs", 0, 99), ("spin_legs", 100, 250)]


def test_label_overlap_rejected(tmp_path):
    (tmp_path / "l.csv").write_text("action,start_frame,end_frame\na,0,99\nb,50,120\n")
    with pytest.raises(ValidationError):
        load_labels(tmp_path / "l.csv")


def test_label_bad_rows(tmp_path):
    (tmp_path / "l.csv").write_text("action,start_frame,end_frame\na,9,3\n")
    with pytest.raises(ValidationError):
        load_labels(tmp_path / "l.csv")
    (tmp_path / "s.csv").write_text("action,start_frame,end_frame,sequence_id\na,0,3,other\n")
    with pytest.raises(ValidationError):
        load_labels(tmp_path / "s.csv")


def test_report_csv_and_summary(tmp_path):
    t = [G("a", 0, 9), G("b", 10, 19)]
    rep = score([(k, k) for k in range(20)], build_areas(t, t), [0.0, 0.5, 0.95])
    text = rep.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# classes=2 within_areas=2 between_areas=2"
    assert lines[1] == "threshold,tp,fp,fn,precision,recall,f1"
    assert lines[-1].startswith("max_f1@0,")
    (tmp_path / "r.csv").write_text(text)
    assert read_report_best(tmp_path / "r.csv")["f1"] == 1.0
    table = summary_table([("FHDOF", tmp_path / "r.csv")])
    assert table.splitlines()[1] == "FHDOF,0,1.00,1.00,1.00"


def test_convert_labels_seconds_and_one_based():
    rows = [{"step": "a", "t0": "0.0", "t1": "1.95"}, {"step": "b", "t0": "2.0", "t1": "3.0"}]
    segs = convert_labels(rows, "step", "t0", "t1", fps=10)
    assert [(s.start_frame, s.end_frame) for s in segs] == [(0, 19), (20, 30)]
    segs = convert_labels([["a", "1", "5"]], 0, 1, 2, one_based=True)
    assert (segs[0].start_frame, segs[0].end_frame) == (0, 4)
