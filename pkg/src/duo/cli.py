"""``duo`` command line: extract, correlate, residuals, ablate, synth-fixture.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 partial
corpus failure. ``DUO_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config
from .pipeline import InputFailure, NumericalFailure

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3

logger = logging.getLogger("duo")


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (unknown keys are rejected)")
    common.add_argument("--seed", type=_u64, help="override the configured seed")
    common.add_argument("--jobs", type=_positive, default=1, help="pieces processed concurrently")
    common.add_argument("--out", default="out", help="output folder (default: out)")

    p = argparse.ArgumentParser(prog="duo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", parents=[common], help="beat-level descriptors, chroma and TIVs")
    s.add_argument("manifest")
    s.add_argument("--notes", action="append", default=[], metavar="[ID=]CSV",
                   help="external note list replacing voice transcription (repeatable)")

    s = sub.add_parser("correlate", parents=[common], help="EMD-filtered correlations and aggregates")
    s.add_argument("dirs", nargs="+", help="extracted piece folders or their parent")
    s.add_argument("--bootstrap", action="store_true", help="add moving-block bootstrap CIs")

    s = sub.add_parser("residuals", parents=[common], help="robust-fit residual outliers")
    s.add_argument("dirs", nargs="+")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--pair", action="append", metavar="A,B", help="descriptor pair (repeatable)")
    g.add_argument("--retained", action="store_true", help="use the corpus-retained pairs")

    s = sub.add_parser("ablate", parents=[common], help="dictionary component ablation and tuning")
    s.add_argument("manifest")
    s.add_argument("--preset", choices=("A", "B", "C"), help="limit toggles and tuning to one preset")

    s = sub.add_parser("synth-fixture", parents=[common], help="write the synthetic duo corpus")
    s.add_argument("--pieces", type=_positive, default=2, help="pieces per collaboration")
    s.add_argument("--collaborations", type=_positive, default=2)
    s.add_argument("--beats", type=_positive, default=128, help="beats per piece")
    s.add_argument("--sample-rate", type=_positive, default=22050)
    return p


def _setup_logging():
    level = os.environ.get("DUO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _report_outcomes(outcomes) -> int:
    failed = [o for o in outcomes if not o.ok]
    for o in failed:
        print(f"piece {o.piece_id}: {o.kind} error: {o.error}", file=sys.stderr)
    if not failed:
        return EXIT_OK
    if len(failed) < len(outcomes):
        return EXIT_PARTIAL
    return EXIT_NUMERICAL if all(o.kind == "numerical" for o in failed) else EXIT_INPUT


def _apply_notes(entries, specs):
    if not specs:
        return entries
    by_id = {e.piece_id: e for e in entries}
    for spec in specs:
        pid, sep, path = spec.partition("=")
        if not sep:
            if len(entries) != 1:
                raise InputFailure("--notes without ID= needs a single-piece manifest")
            pid, path = entries[0].piece_id, spec
        if pid not in by_id:
            raise InputFailure(f"--notes names unknown piece {pid!r}")
        by_id[pid] = dataclasses.replace(by_id[pid], notes=Path(path))
    return [by_id[e.piece_id] for e in entries]


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out)
    if args.command == "synth-fixture":
        from .synth import synth_corpus

        collabs = {f"duo{k + 1}": args.pieces for k in range(args.collaborations)}
        path = synth_corpus(out, collabs, seed=cfg.seed, n_beats=args.beats, sr=args.sample_rate)
        print(path)
        return EXIT_OK
    if args.command == "extract":
        entries = _apply_notes(pipeline.load_manifest(args.manifest), args.notes)
        outcomes = pipeline.extract_corpus(entries, cfg, out, args.jobs)
        return _report_outcomes(outcomes)
    if args.command == "correlate":
        res = pipeline.correlate(args.dirs, cfg, out, args.bootstrap)
        for a in res["corpus"].get("retained", []):
            print(f"retained {a['a']} ~ {a['b']}: r = {a['r']:.3f}")
        if "diagnostic" in res["corpus"]:
            print(res["corpus"]["diagnostic"], file=sys.stderr)
        return EXIT_OK
    if args.command == "residuals":
        pairs = None
        if args.pair:
            pairs = []
            for spec in args.pair:
                parts = [s.strip() for s in spec.split(",")]
                if len(parts) != 2 or not all(parts):
                    raise InputFailure(f"--pair expects A,B, got {spec!r}")
                pairs.append(tuple(parts))
        summary = pipeline.residuals(args.dirs, cfg, pairs, out)
        n_flags = 0
        for pid, info in summary["pieces"].items():
            for key, rep in info.items():
                for o in rep.get("outliers", []):
                    n_flags += 1
                    print(f"{pid} {key} beat {o['beat_index']} z={o['z']:+.2f} "
                          f"section={o['section']} phrase={o['phrase']}")
        if summary["pairs"] and summary["fitted"] == 0:
            print("every requested pair is degenerate", file=sys.stderr)
            return EXIT_NUMERICAL
        return EXIT_OK
    if args.command == "ablate":
        entries = pipeline.load_manifest(args.manifest)
        report, outcomes = pipeline.ablate(entries, cfg, out, args.preset, args.jobs)
        print(f"winner {report['winner']} corpus mean {report['corpus_mean']:.3f}")
        return _report_outcomes(outcomes)
    raise InputFailure(f"unknown command {args.command}")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (InputFailure, ConfigError, *pipeline.INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, *pipeline.NUMERICAL_ERRORS) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
