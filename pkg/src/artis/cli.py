"""``artis`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 validation error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import synth
from .config import RunConfig
from .evaluation import (
    build_areas, convert_labels, coverage_csv, load_labels, save_labels, score, summary_table,
)
from .exceptions import FormatError, ValidationError
from .io import ARTV_MAGIC, load_feature_vectors, load_frames, save_feature_vectors, save_frames
from .pipeline import (
    METHODS, fhdof_extractor, patchnorm_extractor, read_matches, run_match, write_match_outputs,
)

log = logging.getLogger("artis")

EXIT_USAGE, EXIT_IO, EXIT_VALIDATION = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_config_flags(p):
    p.add_argument("--config", type=Path, help="key = value file with RunConfig entries")
    g = p.add_argument_group("run configuration (overrides --config)")
    for f in dataclasses.fields(RunConfig):
        typ = {"int": int, "float": float}.get(f.type, str)
        g.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=typ,
                       default=None, metavar=f.name.upper())


def _config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        if not args.config.exists():
            raise FileNotFoundError(f"no such config file: {args.config}")
        values.update(RunConfig.from_text(args.config.read_text()).__dict__)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, "cfg_" + f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig.from_mapping(values)


def _sidecar(out: Path) -> Path:
    return out.with_name(out.stem + ".config.txt")


def _load_input_frames(path, cfg: RunConfig):
    return load_frames(path, stride=cfg.stride)


def _is_vectors(path: Path) -> bool:
    if path.is_dir() or not path.exists():
        return False
    with open(path, "rb") as fh:
        return fh.read(4) == ARTV_MAGIC


def _features_for(path: Path, method: str, cfg: RunConfig) -> np.ndarray:
    if _is_vectors(path):
        return load_feature_vectors(path).vectors.astype(np.float64)
    frames = _load_input_frames(path, cfg)
    if method == "fhdof":
        return fhdof_extractor(cfg).fit(frames).transform(frames)
    return patchnorm_extractor(cfg).fit(frames).transform(frames)


# --- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.script:
        if not args.script.exists():
            raise FileNotFoundError(f"no such script: {args.script}")
        script = synth.parse_script(args.script.read_text())
    else:
        script = synth.random_script(args.random_seed, n_actions=args.actions)
    if args.permute:
        script = synth.permute(script, [int(x) for x in args.permute.split(",")])
    frames, labels = synth.render(script, time_scale=args.time_scale,
                                  sequence_id=args.out.stem, noise_seed=args.noise_seed)
    save_frames(frames, args.out)
    if args.labels:
        save_labels(labels, args.labels)
    if args.dump_script:
        args.dump_script.write_text(synth.format_script(script))
    log.info("wrote %d frames (%dx%d) to %s", len(frames), frames.width, frames.height, args.out)
    return 0


def cmd_extract(args, kind: str) -> int:
    cfg = _config(args)
    frames = _load_input_frames(args.input, cfg)
    est = fhdof_extractor(cfg) if kind == "fhdof" else patchnorm_extractor(cfg)
    desc = est.fit(frames).transform(frames)
    save_feature_vectors(desc.astype(np.float32), args.out)
    _sidecar(args.out).write_text(cfg.to_text())
    gh, gw = est.grid_shape_
    log.info("%s: %d descriptors of %dx%d -> %s", kind, len(desc), gw, gh, args.out)
    return 0


def cmd_match(args) -> int:
    cfg = _config(args)
    method = args.method
    template = _features_for(args.template, method, cfg)
    observation = _features_for(args.observation, method, cfg)
    segments, matrices = run_match(template, observation, method, cfg)
    write_match_outputs(args.out_dir, segments, matrices, cfg)
    n_pairs = sum(len(s) for s in segments)
    log.info("%s: %d segments, %d matched pairs -> %s", method, len(segments), n_pairs, args.out_dir)
    return 0


def cmd_match_tpdf(args) -> int:
    cfg = _config(args)
    if args.pooling_method is not None:
        cfg = cfg.replace(pooling=args.pooling_method)
    a = load_feature_vectors(args.features_a).vectors.astype(np.float64)
    b = load_feature_vectors(args.features_b).vectors.astype(np.float64)
    segments, matrices = run_match(a, b, "tpdf", cfg)
    write_match_outputs(args.out_dir, segments, matrices, cfg)
    log.info("tpdf: %d segments -> %s", len(segments), args.out_dir)
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    segments = read_matches(args.matches)
    temp = load_labels(args.template_labels)
    obs = load_labels(args.observation_labels)
    report = score(segments, build_areas(temp, obs), cfg.threshold_values())
    text = report.to_csv()
    if args.out:
        args.out.write_text(text)
        _sidecar(args.out).write_text(cfg.to_text())
    else:
        sys.stdout.write(text)
    if args.coverage_out:
        args.coverage_out.write_text(coverage_csv(report))
    best = report.best()
    log.info("max F1 %.4f at threshold %g (P %.4f, R %.4f)",
             best["f1"], best["threshold"], best["precision"], best["recall"])
    return 0


def cmd_convert_labels(args) -> int:
    if not args.input.exists():
        raise FileNotFoundError(f"no such annotation file: {args.input}")
    with open(args.input, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if args.no_header:
        rows = list(csv.reader(lines, delimiter=args.delimiter))
        cols = [int(c) for c in (args.action_col, args.start_col, args.end_col)]
    else:
        rows = list(csv.DictReader(lines, delimiter=args.delimiter))
        cols = [args.action_col, args.start_col, args.end_col]
    segs = convert_labels(rows, *cols, fps=args.fps, one_based=args.one_based)
    save_labels(segs, args.out)
    log.info("converted %d segments -> %s", len(segs), args.out)
    return 0


def cmd_table(args) -> int:
    pairs = []
    for item in args.report:
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--report expects NAME=PATH, got {item!r}")
        pairs.append((name, Path(path)))
    text = summary_table(pairs)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def run_bench(width=320, height=180, frames=40, cfg: RunConfig | None = None, seed=0):
    """Time FHDOF extraction of two sequences plus matching; returns a result dict."""
    cfg = cfg or RunConfig(patch=10)
    script = synth.random_script(seed, n_actions=2, canvas=(width, height),
                                 duration=(frames // 2, frames // 2))
    template, _ = synth.render(script)
    observation, _ = synth.render(script, noise_seed=seed + 1)
    t0 = time.perf_counter()
    ext = fhdof_extractor(cfg)
    a = ext.fit(template).transform(template)
    b = ext.transform(observation)
    t1 = time.perf_counter()
    run_match(a, b, "fhdof", cfg)
    t2 = time.perf_counter()
    n = len(template) + len(observation)
    return dict(frames=n, extract_s=t1 - t0, match_s=t2 - t1, fps=n / (t2 - t0))


def cmd_bench(args) -> int:
    cfg = _config(args)
    if args.cfg_patch is None and not args.config:
        cfg = cfg.replace(patch=10)
    res = run_bench(args.width, args.height, args.frames, cfg)
    verdict = "PASS" if res["fps"] >= args.min_fps else "FAIL"
    print(f"bench {args.width}x{args.height}: {res['frames']} frames, extract {res['extract_s']:.2f}s, "
          f"match {res['match_s']:.2f}s, {res['fps']:.2f} frames/s "
          f"[{verdict} vs {args.min_fps:g} frames/s]")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artis", description="One-shot alignment of task videos.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="render a synthetic task video with labels")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--script", type=Path)
    src.add_argument("--random-seed", type=int)
    s.add_argument("--actions", type=int, default=4, help="actions for --random-seed scripts")
    s.add_argument("--out", type=Path, required=True, help="ARTF output")
    s.add_argument("--labels", type=Path, help="label CSV output")
    s.add_argument("--time-scale", type=float, default=1.0)
    s.add_argument("--noise-seed", type=int)
    s.add_argument("--permute", help="comma-separated action order, e.g. 0,2,1,3")
    s.add_argument("--dump-script", type=Path)
    s.set_defaults(func=cmd_synth)

    for kind in ("fhdof", "patchnorm"):
        e = sub.add_parser(f"extract-{kind}", help=f"compute {kind.upper()} descriptors as ARTV")
        e.add_argument("input", type=Path, help="ARTF file or image directory")
        e.add_argument("--out", type=Path, required=True)
        _add_config_flags(e)
        e.set_defaults(func=lambda a, k=kind: cmd_extract(a, k))

    m = sub.add_parser("match", help="match an observation against a template")
    m.add_argument("--template", type=Path, required=True, help="ARTV, ARTF or image directory")
    m.add_argument("--observation", type=Path, required=True)
    m.add_argument("--method", choices=METHODS, default="fhdof")
    m.add_argument("--out-dir", type=Path, required=True)
    _add_config_flags(m)
    m.set_defaults(func=cmd_match)

    t = sub.add_parser("match-tpdf", help="TPDF matching of two ARTV feature files")
    t.add_argument("--features-a", type=Path, required=True)
    t.add_argument("--features-b", type=Path, required=True)
    t.add_argument("--method", dest="pooling_method", choices=("approx", "ranksvm"))
    t.add_argument("--out-dir", type=Path, required=True)
    _add_config_flags(t)
    t.set_defaults(func=cmd_match_tpdf)

    v = sub.add_parser("eval", help="class-coverage precision/recall sweep")
    v.add_argument("--matches", type=Path, required=True)
    v.add_argument("--template-labels", type=Path, required=True)
    v.add_argument("--observation-labels", type=Path, required=True)
    v.add_argument("--out", type=Path, help="report CSV (default: stdout)")
    v.add_argument("--coverage-out", type=Path, help="per-area coverage CSV")
    _add_config_flags(v)
    v.set_defaults(func=cmd_eval)

    c = sub.add_parser("convert-labels", help="external annotation table -> label CSV")
    c.add_argument("input", type=Path)
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--delimiter", default=",")
    c.add_argument("--no-header", action="store_true", help="columns are given as 0-based positions")
    c.add_argument("--action-col", default="action")
    c.add_argument("--start-col", default="start_frame")
    c.add_argument("--end-col", default="end_frame")
    c.add_argument("--fps", type=float, help="start/end are seconds at this frame rate")
    c.add_argument("--one-based", action="store_true", help="input frame numbers start at 1")
    c.set_defaults(func=cmd_convert_labels)

    r = sub.add_parser("table", help="precision/recall/F1 table from eval reports")
    r.add_argument("--report", action="append", required=True, metavar="NAME=PATH")
    r.add_argument("--out", type=Path)
    r.set_defaults(func=cmd_table)

    b = sub.add_parser("bench", help="FHDOF extract+match throughput")
    b.add_argument("--width", type=int, default=320)
    b.add_argument("--height", type=int, default=180)
    b.add_argument("--frames", type=int, default=40, help="frames per sequence")
    b.add_argument("--min-fps", type=float, default=3.0)
    _add_config_flags(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"artis: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"artis: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"artis: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"artis: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
