"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Synthetic videos are 160x96, so FHDOF runs with 8 px patches (20x12 grid)
rather than the 30 px default meant for 640x360 input.
"""
import time

import numpy as np
import pytest

from artis.cli import main, run_bench
from artis.config import RunConfig
from artis.evaluation import (
    GroundTruthSegment as G, build_areas, coverage_ratio, prf, score,
)
from artis.fhdof import FHDOFExtractor, PatchNormExtractor
from artis.io import save_feature_vectors, save_frames
from artis.optflow import estimate_flow
from artis.seqmatch import SequenceMatcher
from artis.synth import Action, SynthScript, permute, random_script, render
from artis.tpdf import (
    CandidateSet, TPDFMatcher, consistent_chain, rank_pool, ranking_objective, time_varying_mean,
)

from oracles import brute_force_chain_weight

SEEDS = range(5)
PATCH = 8
NOISE = 2.0
PERMUTATION = [0, 2, 1, 3]


def _fhdof(frames):
    ext = FHDOFExtractor(patch=PATCH)
    return ext.fit(frames).transform(frames)


def _patchnorm(frames):
    return PatchNormExtractor(grid_w=32, grid_h=18, norm_patch=6).fit(frames).transform(frames)


# --- 1 ---------------------------------------------------------------------


def test_criterion_01_external_feature_procedure(tmp_path, report_criterion):
    """No numeric target is asserted here; the optional full-data procedure must run.

    Stand-in run: per-frame features written as ARTV (as an external
    extractor would), labels converted from a foreign annotation table,
    both matchers, eval, and a method/precision/recall/F1 table.
    """
    script = random_script(0, noise_sigma=NOISE)
    t, lt = render(script)
    o, lo = render(permute(script, PERMUTATION), noise_seed=100)
    save_frames(t, tmp_path / "t.artf")
    save_frames(o, tmp_path / "o.artf")
    save_feature_vectors(_patchnorm(t), tmp_path / "t.artv")
    save_feature_vectors(_patchnorm(o), tmp_path / "o.artv")
    for name, labels in (("t", lt), ("o", lo)):
        rows = "".join(f"{s.action_label}\t{s.start_frame + 1}\t{s.end_frame + 1}\n" for s in labels)
        (tmp_path / f"{name}.tsv").write_text("step\tfirst\tlast\n" + rows)
        assert main(["convert-labels", str(tmp_path / f"{name}.tsv"), "--delimiter", "\t",
                     "--action-col", "step", "--start-col", "first", "--end-col", "last",
                     "--one-based", "--out", str(tmp_path / f"{name}.csv")]) == 0
    codes = [
        main(["match-tpdf", "--features-a", str(tmp_path / "t.artv"), "--features-b",
              str(tmp_path / "o.artv"), "--window", "10", "--n-chains", "3",
              "--out-dir", str(tmp_path / "tpdf")]),
        main(["match", "--template", str(tmp_path / "t.artf"), "--observation",
              str(tmp_path / "o.artf"), "--method", "fhdof", "--patch", str(PATCH),
              "--out-dir", str(tmp_path / "fhdof")]),
        main(["match", "--template", str(tmp_path / "t.artf"), "--observation",
              str(tmp_path / "o.artf"), "--method", "patchnorm-baseline",
              "--out-dir", str(tmp_path / "seqslam")]),
    ]
    for m in ("tpdf", "fhdof", "seqslam"):
        codes.append(main(["eval", "--matches", str(tmp_path / m / "matches.csv"),
                           "--template-labels", str(tmp_path / "t.csv"),
                           "--observation-labels", str(tmp_path / "o.csv"),
                           "--out", str(tmp_path / f"{m}.report.csv")]))
    codes.append(main(["table", "--report", f"TPDF={tmp_path / 'tpdf.report.csv'}",
                       "--report", f"FHDOF={tmp_path / 'fhdof.report.csv'}",
                       "--report", f"SeqSLAM={tmp_path / 'seqslam.report.csv'}",
                       "--out", str(tmp_path / "table.csv")]))
    table = (tmp_path / "table.csv").read_text().splitlines()
    ok = codes == [0] * len(codes) and table[0] == "name,threshold,precision,recall,f1" and len(table) == 4
    report_criterion(1, ok, "optional external-feature procedure ran end to end; no numeric tolerance "
                     "asserted | " + " ; ".join(table[1:]))
    assert ok


# --- 2 ---------------------------------------------------------------------


def test_criterion_02_self_match(report_criterion):
    cfg = RunConfig()
    details, ok = [], True
    for seed in SEEDS:
        script = random_script(seed, noise_sigma=NOISE)
        frames, labels = render(script)
        assert len(frames) >= 120 and len(labels) >= 3
        t0 = time.perf_counter()
        a, b = _fhdof(frames), _fhdof(frames)
        segs = SequenceMatcher(ds=cfg.ds).fit(a).predict(b)
        elapsed = time.perf_counter() - t0
        hits = {j for s in segs for i, j in s.pairs if abs(i - j) <= 1}
        evaluable = range(cfg.ds - 1, len(b))
        frac = len(hits & set(evaluable)) / len(evaluable)
        ok &= frac >= 0.9 and elapsed < 30.0
        details.append(f"seed {seed}: {frac:.3f} in {elapsed:.1f}s")
    report_criterion(2, ok, "FHDOF self-match diagonal recovery >= 0.90, < 30 s | " + ", ".join(details))
    assert ok


# --- 3 ---------------------------------------------------------------------


def _tp_areas_same_motif(report, script, perm_script):
    best = report.best()
    motif = {a.label: a.motif for a in script.actions}
    motif_o = {a.label: a.motif for a in perm_script.actions}
    for area, cov in report.coverages:
        if cov > best["threshold"] and area.kind == "within_class":
            t, o = area.template_segment.action_label, area.observation_segment.action_label
            if motif[t] != motif_o[o] or t != o:
                return False
    return True


def test_criterion_03_permutation(report_criterion):
    details, ok = [], True
    for seed in SEEDS:
        script = random_script(seed, noise_sigma=NOISE)
        perm = permute(script, PERMUTATION)
        t, lt = render(script, sequence_id="template")
        o, lo = render(perm, sequence_id="observation", noise_seed=seed + 100)
        areas = build_areas(lt, lo)

        segs = SequenceMatcher().fit(_fhdof(t)).predict(_fhdof(o))
        rep_f = score(segs, areas)
        segs = TPDFMatcher(window=10, n_chains=3).fit(_patchnorm(t)).predict(_patchnorm(o))
        rep_t = score(segs, areas)

        f_f, f_t = rep_f.best()["f1"], rep_t.best()["f1"]
        motifs = _tp_areas_same_motif(rep_f, script, perm) and _tp_areas_same_motif(rep_t, script, perm)
        ok &= f_f >= 0.8 and f_t >= 0.8 and motifs
        details.append(f"seed {seed}: FHDOF {f_f:.3f} TPDF {f_t:.3f}")
    report_criterion(3, ok, "permuted actions best-F1 >= 0.8 for both, TP areas same-motif | "
                     + ", ".join(details))
    assert ok


# --- 4 ---------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_04_time_warp(report_criterion):
    # the default velocity band [0.8, 1.25] excludes 0.5, so the sweep is widened;
    # 20-column lines resolve velocity to about 1/19
    matcher = SequenceMatcher(ds=20, v_min=0.3, v_max=1.6, v_step=0.05)
    details, ok = [], True
    for speed in (0.5, 1.25):
        within, total = 0, 0
        for seed in SEEDS:
            script = random_script(seed, noise_sigma=NOISE)
            t, _ = render(script)
            o, _ = render(script, time_scale=speed, noise_seed=seed + 1000)
            segs = matcher.fit(_fhdof(t)).predict(_fhdof(o))
            v = np.array([x for s in segs for x in s.pair_velocities])
            within += int(np.sum(np.abs(v - speed) <= 0.1 + 1e-9))
            total += len(v)
        frac = within / total
        ok &= frac >= 0.8
        details.append(f"{speed}x: {frac:.3f} of {total} columns")
    report_criterion(4, ok, "velocity within +-0.1 on >= 80% of matched columns | " + ", ".join(details))
    assert ok


# --- 5 ---------------------------------------------------------------------


def test_criterion_05_chain_oracle(report_criterion):
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(0, 16))
        cells = rng.choice(144, size=n, replace=False)
        # dyadic weights keep every partial sum exact
        trip = [(int(c // 12), int(c % 12), float(rng.integers(1, 256)) / 64) for c in cells]
        cands = CandidateSet.from_triples(trip)
        segs = consistent_chain(cands, gap_max=4)
        got = sum(s.score for s in segs)
        if got != brute_force_chain_weight(trip):
            mismatches += 1
    ok = mismatches == 0
    report_criterion(5, ok, f"consistent_chain weight == brute force on 200 sets: {mismatches} mismatches")
    assert ok


# --- 6 ---------------------------------------------------------------------


def test_criterion_06_rank_pooling(report_criterion):
    rng = np.random.default_rng(6)
    err_const = err_anti = err_lin = 0.0
    for _ in range(50):
        W, D = int(rng.integers(2, 30)), int(rng.integers(1, 10))
        v, w = rng.normal(size=(W, D)) * 10, rng.normal(size=(W, D)) * 10
        a, b = rng.normal(size=2)
        err_const = max(err_const, np.abs(rank_pool(np.tile(v[:1], (W, 1)))).max())
        err_anti = max(err_anti, np.abs(rank_pool(v[::-1]) + rank_pool(v)).max())
        err_lin = max(err_lin, np.abs(rank_pool(a * v + b * w) - a * rank_pool(v) - b * rank_pool(w)).max())
    approx_ok = max(err_const, err_anti, err_lin) <= 1e-9

    wins = 0
    for trial in range(50):
        r = np.random.default_rng(1000 + trial)
        v = r.normal(size=(20, 8)) + np.arange(20)[:, None] * r.normal(scale=0.2, size=8)
        u = rank_pool(v, "ranksvm")
        means = time_varying_mean(v)
        obj = ranking_objective(u, means)
        rand = r.normal(size=(1000, 8))
        rand *= np.linalg.norm(u) / np.linalg.norm(rand, axis=1, keepdims=True)
        wins += all(obj < ranking_objective(x, means) for x in rand)
    ok = approx_ok and wins >= 0.99 * 50
    report_criterion(6, ok, f"approx max errors const {err_const:.1e} anti {err_anti:.1e} "
                     f"lin {err_lin:.1e} (<= 1e-9); ranksvm beat 1000 random in {wins}/50 trials")
    assert ok


# --- 7 ---------------------------------------------------------------------


def test_criterion_07_flow(report_criterion):
    rng = np.random.default_rng(7)
    zero = max(estimate_flow(f, f).magnitude.max()
               for f in (rng.uniform(0, 255, size=(48, 64)) for _ in range(10)))
    act = Action("a", 2, "translate_blob", size=16, speed=2.0, start=(20.0, 16.0))
    frames, _ = render(SynthScript((act,), canvas=(64, 48)))
    flow = estimate_flow(frames[0], frames[1])
    support = (frames[0] != frames[0].min()) | (frames[1] != frames[1].min())
    mean_mag = flow.magnitude[support].mean()
    ok = zero < 1e-9 and 1.0 <= mean_mag <= 3.0
    report_criterion(7, ok, f"self-flow max {zero:.1e} (< 1e-9); 2 px translation mean magnitude "
                     f"{mean_mag:.3f} in [1, 3]")
    assert ok


# --- 8 ---------------------------------------------------------------------


def _fixtures():
    a, b, c = G("a", 0, 9), G("b", 10, 19), G("c", 20, 39)
    diag = [(k, k) for k in range(40)]
    # (matches, template labels, observation labels, threshold,
    #  expected coverages in build_areas order, expected (tp, fp, fn, p, r, f1))
    return [
        ([(k, k) for k in range(5)], [a], [G("a", 0, 19)], 0.4, [5 / 10], (1, 0, 0, 1.0, 1.0, 1.0)),
        ([], [a], [a], 0.0, [0.0], (0, 0, 1, 1.0, 0.0, 0.0)),
        ([(k, k) for k in range(10)], [a], [a], 0.5, [1.0], (1, 0, 0, 1.0, 1.0, 1.0)),
        (diag, [a, b], [a, b], 0.99, [1.0, 0.0, 0.0, 1.0], (2, 0, 0, 1.0, 1.0, 1.0)),
        (diag, [a, b], [a, b], 1.0, [1.0, 0.0, 0.0, 1.0], (0, 0, 2, 1.0, 0.0, 0.0)),
        ([(i, j) for i in range(20) for j in range(20)], [a, b], [a, b], 0.0,
         [10.0, 10.0, 10.0, 10.0], (2, 2, 0, 0.5, 1.0, 2 / 3)),
        (diag, [a, c], [G("a", 0, 4), G("c", 20, 29)], 0.5,
         [5 / 5, 0.0, 0.0, 10 / 10], (2, 0, 0, 1.0, 1.0, 1.0)),
        ([(k, 10 + k) for k in range(10)] + [(10 + k, k) for k in range(3)], [a, b], [a, b], 0.2,
         [0.0, 1.0, 0.3, 0.0], (0, 2, 2, 0.0, 0.0, 0.0)),
        ([(k, k) for k in range(7)] + [(k, 10 + k) for k in range(4)], [a, b], [a, b], 0.35,
         [0.7, 0.4, 0.0, 0.0], (1, 1, 1, 0.5, 0.5, 0.5)),
        ([(k, k) for k in range(0, 40, 2)], [a, b, c], [a, b, c], 0.45,
         [0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.5], (3, 0, 0, 1.0, 1.0, 1.0)),
    ]


def test_criterion_08_eval_arithmetic(report_criterion):
    labels = [G(f"c{k}", 20 * k, 20 * k + 19) for k in range(6)]
    areas = build_areas(labels, labels)
    n_within = sum(a.kind == "within_class" for a in areas)
    n_between = sum(a.kind == "between_class" for a in areas)
    worst = 0.0
    for matches, tl, ol, th, covs, (tp, fp, fn, p, r, f) in _fixtures():
        ar = build_areas(tl, ol)
        got = [coverage_ratio(matches, x) for x in ar]
        worst = max(worst, max(abs(g - e) for g, e in zip(got, covs)))
        row = score(matches, ar, [th]).rows[0]
        if (row["tp"], row["fp"], row["fn"]) != (tp, fp, fn):
            worst = np.inf
        worst = max(worst, abs(row["precision"] - p), abs(row["recall"] - r), abs(row["f1"] - f))
    p, r, f = prf(3, 1, 2)
    worst = max(worst, abs(f - 2 * 0.75 * 0.6 / 1.35))
    ok = n_within == 6 and n_between == 30 and worst <= 1e-12
    report_criterion(8, ok, f"6 classes -> {n_within} within / {n_between} between areas; "
                     f"10 fixtures max error {worst:.1e} (<= 1e-12)")
    assert ok


# --- 9 ---------------------------------------------------------------------


def _run_all(root):
    root.mkdir()
    p = lambda *n: str(root.joinpath(*n))
    steps = [
        ["synth", "--random-seed", "2", "--out", p("t.artf"), "--labels", p("t.csv")],
        ["synth", "--random-seed", "2", "--permute", "0,2,1,3", "--noise-seed", "9",
         "--time-scale", "1.1", "--out", p("o.artf"), "--labels", p("o.csv")],
        ["extract-fhdof", p("t.artf"), "--out", p("t.fhdof.artv"), "--patch", "8"],
        ["extract-patchnorm", p("t.artf"), "--out", p("t.pn.artv")],
        ["extract-patchnorm", p("o.artf"), "--out", p("o.pn.artv")],
        ["match", "--template", p("t.artf"), "--observation", p("o.artf"), "--method", "fhdof",
         "--patch", "8", "--out-dir", p("fhdof")],
        ["match", "--template", p("t.artf"), "--observation", p("o.artf"),
         "--method", "patchnorm-baseline", "--out-dir", p("pn")],
        ["match", "--template", p("t.artf"), "--observation", p("o.artf"), "--method", "tpdf",
         "--window", "10", "--out-dir", p("tpdf")],
        ["match-tpdf", "--features-a", p("t.pn.artv"), "--features-b", p("o.pn.artv"),
         "--method", "ranksvm", "--window", "6", "--ranksvm-iterations", "40", "--out-dir", p("rk")],
        ["eval", "--matches", p("fhdof", "matches.csv"), "--template-labels", p("t.csv"),
         "--observation-labels", p("o.csv"), "--out", p("r.csv"), "--coverage-out", p("cov.csv")],
        ["table", "--report", "FHDOF=" + p("r.csv"), "--out", p("table.csv")],
    ]
    codes = [main(s) for s in steps]
    files = {str(f.relative_to(root)): f.read_bytes() for f in sorted(root.rglob("*")) if f.is_file()}
    return codes, files


@pytest.mark.slow
def test_criterion_09_determinism(tmp_path, report_criterion):
    c1, f1 = _run_all(tmp_path / "a")
    c2, f2 = _run_all(tmp_path / "b")
    differing = sorted(k for k in f1.keys() | f2.keys() if f1.get(k) != f2.get(k))
    ok = c1 == c2 == [0] * len(c1) and not differing
    report_criterion(9, ok, f"{len(c1)} CLI runs twice, {len(f1)} output files, "
                     f"{len(differing)} differ {differing[:3]}")
    assert ok


# --- 10 --------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_10_throughput(report_criterion):
    res = run_bench(320, 180, 40, RunConfig(patch=10))
    ok = res["fps"] >= 3.0
    report_criterion(10, ok, f"bench 320x180: {res['fps']:.2f} frames/s (>= 3) on this machine")
    assert ok
