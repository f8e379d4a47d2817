"""Corpus-level orchestration: extraction, correlation, residuals and ablation runs."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .ablation import PRESETS, AblationConfig, AblationPiece, run_ablation
from .config import RunConfig
from .descriptors import (
    activity_mask,
    baseline_tempo,
    contour,
    first_interaction_section,
    guitar_rhythmic_density,
    loudness_db,
    tempo_curve,
    tempo_deviation,
    voice_rhythmic_density,
    DescriptorSeries,
)
from .emd import slow_component
from .harmony import NNLSChroma, TIVector, harmonic_center, tiv_series, tonal_dispersion
from .ingest import (
    AnnotationError,
    AnnotationSet,
    AudioBuffer,
    AudioError,
    BeatGrid,
    ChromaSeries,
    build_beat_grid,
    chords_to_binary_chroma,
    load_audio,
    parse_annotations,
)
from .nnls import NNLSIterationError
from .pitch import NoteEvents, read_notes, transcribe_voice
from .robust import residual_outliers, robust_fit
from .spectral import SpectralError, cqt, hpss_audio
from .stats import aggregate_reports, block_bootstrap_ci, correlation_matrix, gate_pairs

logger = logging.getLogger(__name__)

DEFAULT_COLLABORATION = "default"


class InputFailure(RuntimeError):
    """Bad or missing input; maps to exit code 1."""


class NumericalFailure(RuntimeError):
    """A computation could not produce a result; maps to exit code 2."""


INPUT_ERRORS = (AudioError, AnnotationError, OSError, json.JSONDecodeError, io.ReportError)
NUMERICAL_ERRORS = (NNLSIterationError, SpectralError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class PieceEntry:
    piece_id: str
    voice: Path
    guitar: Path
    annotations: Path
    collaboration: str = DEFAULT_COLLABORATION
    notes: Path | None = None

    def check_paths(self):
        for label, p in (("voice", self.voice), ("guitar", self.guitar),
                         ("annotations", self.annotations), ("notes", self.notes)):
            if p is not None and not Path(p).exists():
                raise InputFailure(f"{self.piece_id}: {label} path {p} does not exist")


def load_manifest(path) -> list[PieceEntry]:
    """Read ``{"pieces": [{id, voice, guitar, annotations, collaboration?, notes?}]}``.

    Relative paths resolve against the manifest's folder. Paths are checked
    when a piece runs, not here.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputFailure(f"cannot read manifest {path}: {exc}") from exc
    items = data.get("pieces") if isinstance(data, dict) else None
    if not isinstance(items, list) or not items:
        raise InputFailure(f"{path}: manifest needs a non-empty 'pieces' list")
    root = path.parent
    out, seen = [], set()
    allowed = {"id", "voice", "guitar", "annotations", "collaboration", "notes"}
    for k, item in enumerate(items):
        if not isinstance(item, dict):
            raise InputFailure(f"{path}: piece {k} is not an object")
        extra = set(item) - allowed
        missing = {"id", "voice", "guitar", "annotations"} - set(item)
        if extra or missing:
            raise InputFailure(f"{path}: piece {k} has unknown {sorted(extra)} / missing {sorted(missing)} keys")
        pid = str(item["id"])
        if pid in seen:
            raise InputFailure(f"{path}: duplicate piece id {pid!r}")
        if not pid or "/" in pid or pid.startswith("."):
            raise InputFailure(f"{path}: piece id {pid!r} is not a plain folder name")
        seen.add(pid)
        notes = item.get("notes")
        out.append(PieceEntry(
            pid, root / item["voice"], root / item["guitar"], root / item["annotations"],
            str(item.get("collaboration", DEFAULT_COLLABORATION)),
            root / notes if notes else None,
        ))
    return out


# --------------------------------------------------------------------- extraction


@dataclass
class PieceAnalysis:
    grid: BeatGrid
    descriptors: list
    chroma: ChromaSeries
    tiv: np.ndarray
    dissonance: np.ndarray
    dispersion: np.ndarray
    tiv_valid: np.ndarray
    notes: NoteEvents
    meta: dict = field(default_factory=dict)


def analyze_piece(voice: AudioBuffer, guitar: AudioBuffer, ann: AnnotationSet, cfg: RunConfig,
                  notes: NoteEvents | None = None) -> PieceAnalysis:
    """All beat-level descriptors, chroma and TIVs of one piece."""
    g = build_beat_grid(ann)
    fr, act, cq = cfg.frames, cfg.activity, cfg.cqt
    v_loud = loudness_db(voice, g, fr.frame_len, fr.hop, "voice_loudness")
    g_loud = loudness_db(guitar, g, fr.frame_len, fr.hop, "guitar_loudness")
    v_mask = activity_mask(v_loud, act.threshold_db)
    g_mask = activity_mask(g_loud, act.threshold_db)

    source = "external" if notes is not None else "transcribed"
    if notes is None:
        p = cfg.pitch
        notes = transcribe_voice(voice, p.frame_len, p.hop, p.threshold, p.fmin, p.fmax,
                                 p.silence_db, p.split_semitones, p.min_note_s)
    harm, perc = hpss_audio(guitar, fr.frame_len, fr.hop, cfg.hpss.time_kernel, cfg.hpss.freq_kernel)
    on = cfg.onsets
    g_density = guitar_rhythmic_density(perc, g, fr.frame_len, fr.hop, delta=on.delta,
                                        window_s=on.window_s, min_gap_s=on.min_gap_s)
    c_voice = cqt(voice, cq.f_min, cq.bins_per_octave, cq.n_bins, cq.hop)
    c_harm = cqt(harm, cq.f_min, cq.bins_per_octave, cq.n_bins, cq.hop)

    d = cfg.dictionary
    est = NNLSChroma.from_params(d.params(), f_min=cq.f_min, bins_per_octave=cq.bins_per_octave,
                                 median_width=d.median_width)
    raw = est.beat_chroma(c_harm, g)
    chroma = ChromaSeries(raw.values, raw.valid & g_mask)
    T, t_valid = tiv_series(chroma, d.tiv_weights)
    w = np.asarray(d.tiv_weights, dtype=float)
    dissonance = np.where(t_valid, 1.0 - np.linalg.norm(T, axis=1) / np.linalg.norm(w), 0.0)

    section = first_interaction_section(g, v_mask, g_mask, act.interaction_fraction)
    center_fallback = section is None or not t_valid[section].any()
    dispersion = np.zeros(len(g))
    if t_valid.any():
        if center_fallback:
            logger.warning("no jointly active section with chroma; dispersion centre uses all beats")
            section = np.arange(len(g))
        center = harmonic_center(T, t_valid, section, w)
        for b in np.flatnonzero(t_valid):
            dispersion[b] = tonal_dispersion(TIVector(T[b], w), center)

    tempo = tempo_curve(g)
    base_bpm, tempo_fallback = baseline_tempo(tempo, g, v_mask, g_mask, act.interaction_fraction)
    series = [
        v_loud.masked(v_mask),
        g_loud.masked(g_mask),
        voice_rhythmic_density(notes, g).masked(v_mask),
        g_density.masked(g_mask),
        contour(c_voice, g, v_mask, "melodic_contour"),
        contour(c_harm, g, g_mask, "harmonic_contour"),
        DescriptorSeries("tonal_dissonance", dissonance, "dimensionless", t_valid),
        DescriptorSeries("tonal_dispersion", dispersion, "dimensionless", t_valid),
        tempo,
        tempo_deviation(tempo, base_bpm),
    ]
    meta = {
        "n_beats": len(g),
        "baseline_tempo_bpm": base_bpm,
        "baseline_tempo_fallback": tempo_fallback,
        "dispersion_center_fallback": bool(center_fallback),
        "nnls_failed_frames": int(est.failed_frames_.sum()),
        "notes_source": source,
        "n_notes": len(notes),
    }
    return PieceAnalysis(g, series, chroma, T, dissonance, dispersion, t_valid, notes, meta)


def extract_piece(entry: PieceEntry, cfg: RunConfig, out_dir) -> dict:
    """Analyze one manifest entry and write its per-piece output folder."""
    entry.check_paths()
    voice = load_audio(entry.voice)
    guitar = load_audio(entry.guitar)
    if voice.sample_rate != guitar.sample_rate:
        raise InputFailure(f"{entry.piece_id}: stems have different sample rates")
    ann = parse_annotations(entry.annotations)
    notes = read_notes(entry.notes) if entry.notes is not None else None
    res = analyze_piece(voice, guitar, ann, cfg, notes)
    h, seed = cfg.digest(), cfg.seed
    folder = Path(out_dir) / entry.piece_id
    folder.mkdir(parents=True, exist_ok=True)
    io.write_descriptors(folder / "descriptors.csv", res.descriptors, res.grid, h, seed)
    io.write_chroma(folder / "chroma.csv", res.chroma, h, seed)
    io.write_tiv(folder / "tiv.csv", res.tiv, res.dissonance, res.dispersion, res.tiv_valid, h, seed)
    io.write_segments(folder / "segments.csv", res.grid, h, seed)
    io.write_notes(folder / "notes.csv", res.notes, h, seed)
    meta = dict(res.meta, id=entry.piece_id, collaboration=entry.collaboration,
                config_hash=h, seed=seed)
    io.write_json(folder / "piece.json", meta)
    return meta


# ----------------------------------------------------------------- concurrency


@dataclass
class PieceOutcome:
    piece_id: str
    ok: bool
    value: object = None
    error: str = ""
    kind: str = ""  # "input" or "numerical" on failure


def _guarded(fn, piece_id, *args) -> PieceOutcome:
    try:
        return PieceOutcome(piece_id, True, fn(*args))
    except (InputFailure, *INPUT_ERRORS) as exc:
        return PieceOutcome(piece_id, False, error=str(exc), kind="input")
    except (NumericalFailure, *NUMERICAL_ERRORS) as exc:
        return PieceOutcome(piece_id, False, error=str(exc), kind="numerical")
    except ValueError as exc:
        return PieceOutcome(piece_id, False, error=str(exc), kind="input")


def map_pieces(fn, jobs, ids, *arg_lists) -> list[PieceOutcome]:
    """Run ``fn`` per piece (up to ``jobs`` processes), isolating failures; keeps input order."""
    calls = list(zip(ids, *arg_lists))
    if jobs <= 1 or len(calls) <= 1:
        return [_guarded(fn, *c) for c in calls]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_guarded, fn, *c) for c in calls]
        return [f.result() for f in futures]


def extract_corpus(entries, cfg: RunConfig, out_dir, jobs: int = 1) -> list[PieceOutcome]:
    n = len(entries)
    return map_pieces(extract_piece, jobs, [e.piece_id for e in entries], entries, [cfg] * n,
                      [out_dir] * n)


# ----------------------------------------------------------------- correlation


@dataclass
class ExtractedPiece:
    piece_id: str
    collaboration: str
    folder: Path
    beat_times: np.ndarray
    table: dict  # name -> (values, mask)


def find_piece_dirs(paths) -> list[Path]:
    """Extracted piece folders: given folders holding ``descriptors.csv`` or their parents."""
    out = []
    for p in map(Path, paths):
        if (p / "descriptors.csv").exists():
            out.append(p)
        elif p.is_dir():
            kids = sorted(k for k in p.iterdir() if (k / "descriptors.csv").exists())
            if not kids:
                raise InputFailure(f"{p} holds no extracted pieces")
            out.extend(kids)
        else:
            raise InputFailure(f"{p} is not an extraction output folder")
    return out


def load_extracted(folder) -> ExtractedPiece:
    folder = Path(folder)
    meta_file = folder / "piece.json"
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    times, table = io.read_descriptors(folder / "descriptors.csv")
    return ExtractedPiece(str(meta.get("id", folder.name)),
                          str(meta.get("collaboration", DEFAULT_COLLABORATION)), folder, times, table)


def load_extracted_all(paths) -> list[ExtractedPiece]:
    pieces = [load_extracted(d) for d in find_piece_dirs(paths)]
    ids = [p.piece_id for p in pieces]
    if len(set(ids)) != len(ids):
        raise InputFailure("duplicate piece ids among the extracted folders")
    return sorted(pieces, key=lambda p: p.piece_id)


def slow_table(piece: ExtractedPiece, cfg: RunConfig):
    """EMD slow components per descriptor plus the per-run decompositions."""
    e = cfg.emd
    slow, parts = {}, {}
    for name, (vals, mask) in sorted(piece.table.items()):
        s, p = slow_component(np.nan_to_num(vals), mask, e.start_index, e.include_residue, e.min_run,
                              return_parts=True, sd_threshold=e.sd_threshold, max_sifts=e.max_sifts)
        slow[name] = (s, mask)
        parts[name] = p
    return slow, parts


def write_emd_dump(path, piece: ExtractedPiece, parts, cfg: RunConfig) -> None:
    """Long-format dump: one row per descriptor and active beat, one column per IMF + residue."""
    k_max = max((len(s.imfs) for runs in parts.values() for _, _, s in runs if s is not None), default=0)
    header = ["descriptor", "beat_index", "value"] + [f"imf{k + 1}" for k in range(k_max)] + ["residue"]
    rows = []
    for name in sorted(parts):
        vals = piece.table[name][0]
        for a, b, s in parts[name]:
            for i in range(a, b):
                row = [name, i, float(vals[i])]
                if s is None:
                    row += [None] * k_max + [float(vals[i])]
                else:
                    imfs = [float(m[i - a]) for m in s.imfs]
                    row += imfs + [None] * (k_max - len(imfs)) + [float(s.residue[i - a])]
                rows.append(row)
    io.write_table(path, header, rows, cfg.digest(), cfg.seed)


def _report_json(rep, retained=None) -> dict:
    pairs = []
    for a, b in rep.pairs():
        entry = {"a": a, "b": b, "r": rep.r.get((a, b)), "n": rep.n.get((a, b), 0)}
        if rep.members:
            entry["members"] = rep.members.get((a, b), 0)
        if rep.ci:
            ci = rep.ci.get((a, b))
            entry["ci"] = list(ci) if ci is not None else None
        pairs.append(entry)
    out = {"names": rep.names, "matrix": rep.matrix(), "pairs": pairs}
    if all(e["r"] is None for e in pairs):
        out["diagnostic"] = "no descriptor pair reached the minimum joint support"
    if retained is not None:
        out["retained"] = [{"a": a, "b": b, "r": r} for a, b, r in retained]
    return out


def correlate(paths, cfg: RunConfig, out_dir=None, bootstrap: bool = False) -> dict:
    """Per-piece EMD-filtered correlation matrices and Fisher-z aggregates.

    Writes ``correlations.json`` (and one ``emd.csv`` per piece) under
    ``out_dir`` when given; returns the report dictionary.
    """
    pieces = load_extracted_all(paths)
    st = cfg.stats
    reports = {}
    for k, piece in enumerate(pieces):
        slow, parts = slow_table(piece, cfg)
        rep = correlation_matrix(slow, st.min_support)
        if bootstrap:
            for j, (a, b) in enumerate(rep.pairs()):
                if rep.r[(a, b)] is None:
                    continue
                (xa, ma), (xb, mb) = slow[a], slow[b]
                rng = np.random.default_rng([cfg.seed, k, j])
                try:
                    rep.ci[(a, b)] = block_bootstrap_ci(xa, xb, st.bootstrap_samples, st.block_len, rng,
                                                        st.ci_level, ma & mb)
                except ValueError:
                    rep.ci[(a, b)] = None
        reports[piece.piece_id] = rep
        if out_dir is not None:
            write_emd_dump(Path(out_dir) / piece.piece_id / "emd.csv", piece, parts, cfg)
    collabs = {}
    for piece in pieces:
        collabs.setdefault(piece.collaboration, []).append(reports[piece.piece_id])
    result = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "retain_threshold": st.retain_threshold,
        "pieces": {},
        "collaborations": {},
    }
    for piece in pieces:
        entry = _report_json(reports[piece.piece_id])
        entry["collaboration"] = piece.collaboration
        result["pieces"][piece.piece_id] = entry
    for label in sorted(collabs):
        agg = aggregate_reports(collabs[label])
        entry = _report_json(agg, gate_pairs(agg, st.retain_threshold))
        entry["pieces"] = sorted(p.piece_id for p in pieces if p.collaboration == label)
        result["collaborations"][label] = entry
    corpus = aggregate_reports(reports[p.piece_id] for p in pieces)
    result["corpus"] = _report_json(corpus, gate_pairs(corpus, st.retain_threshold))
    if out_dir is not None:
        io.write_json(Path(out_dir) / "correlations.json", result)
    return result


# ------------------------------------------------------------------- residuals


def residuals(paths, cfg: RunConfig, pairs=None, out_dir=None) -> dict:
    """Robust fits and flagged beats for the given pairs, or the corpus-retained ones.

    Regression runs on the raw (unfiltered) descriptor series over their
    joint active beats. Writes ``residuals.csv`` per piece and
    ``outliers.json`` under ``out_dir`` when given.
    """
    pieces = load_extracted_all(paths)
    if pairs is None:
        pairs = [(r["a"], r["b"]) for r in correlate(paths, cfg)["corpus"]["retained"]]
    pairs = [tuple(p) for p in pairs]
    for a, b in pairs:
        for piece in pieces:
            for name in (a, b):
                if name not in piece.table:
                    raise InputFailure(f"{piece.piece_id} has no descriptor {name!r}")
    rc, h, seed = cfg.residuals, cfg.digest(), cfg.seed
    summary = {"config_hash": h, "seed": seed, "config": cfg.to_dict(),
               "pairs": [list(p) for p in pairs], "pieces": {}}
    n_fitted = 0
    for piece in pieces:
        seg_file = piece.folder / "segments.csv"
        if seg_file.exists():
            sections, phrases = io.read_segments(seg_file)
        else:
            sections = phrases = [""] * piece.beat_times.size
        rows, info = [], {}
        for a, b in pairs:
            (x, mx), (y, my) = piece.table[a], piece.table[b]
            joint = mx & my
            xs, ys = np.where(joint, x, np.nan), np.where(joint, y, np.nan)
            key = f"{a}|{b}"
            try:
                fit = robust_fit(xs, ys, cfg.stats.min_support, c=rc.huber_c)
            except ValueError as exc:
                logger.warning("%s: pair %s is degenerate: %s", piece.piece_id, key, exc)
                info[key] = {"degenerate": True, "reason": str(exc), "n": int(joint.sum())}
                continue
            rep = residual_outliers(xs, ys, fit, rc.z_threshold, np.arange(xs.size), sections, phrases, (a, b))
            n_fitted += 1
            for i, beat in enumerate(rep.beats):
                rows.append([key, int(beat), float(piece.beat_times[beat]), float(rep.z[i]),
                             bool(rep.flags[i]), int(rep.sign[i]), rep.sections[i], rep.phrases[i]])
            info[key] = {
                "degenerate": bool(rep.degenerate),
                "n": int(rep.beats.size),
                "intercept": fit.intercept,
                "slope": fit.slope,
                "converged": fit.converged,
                "outliers": [
                    {"beat_index": bt, "beat_time_s": float(piece.beat_times[bt]), "z": z, "sign": sg,
                     "section": sec, "phrase": ph}
                    for bt, z, sg, sec, ph in rep.outliers
                ],
            }
        summary["pieces"][piece.piece_id] = info
        if out_dir is not None:
            io.write_table(Path(out_dir) / piece.piece_id / "residuals.csv",
                           ["pair", "beat_index", "beat_time_s", "z", "flag", "sign", "section", "phrase"],
                           rows, h, seed)
    summary["fitted"] = n_fitted
    if out_dir is not None:
        io.write_json(Path(out_dir) / "outliers.json", summary)
    return summary


# -------------------------------------------------------------------- ablation


def prepare_ablation_piece(entry: PieceEntry, cfg: RunConfig) -> AblationPiece | None:
    """Harmonic-guitar CQT, beat grid and binary reference; ``None`` without chords."""
    entry.check_paths()
    ann = parse_annotations(entry.annotations)
    if not ann.chords:
        logger.warning("%s has no chord annotations; skipped", entry.piece_id)
        return None
    guitar = load_audio(entry.guitar)
    fr, cq = cfg.frames, cfg.cqt
    harm, _ = hpss_audio(guitar, fr.frame_len, fr.hop, cfg.hpss.time_kernel, cfg.hpss.freq_kernel)
    c = cqt(harm, cq.f_min, cq.bins_per_octave, cq.n_bins, cq.hop)
    g = build_beat_grid(ann)
    return AblationPiece(entry.piece_id, c, g, chords_to_binary_chroma(ann, g))


def ablate(entries, cfg: RunConfig, out_dir=None, preset: str | None = None, jobs: int = 1):
    """Component table, preset scores and tuned parameters over a manifest.

    ``preset`` restricts both the toggles and the tuned presets to that
    preset's components. Returns ``(report, outcomes)``.
    """
    n = len(entries)
    outcomes = map_pieces(prepare_ablation_piece, jobs, [e.piece_id for e in entries], entries, [cfg] * n)
    pieces = [o.value for o in outcomes if o.ok and o.value is not None]
    if not pieces:
        raise InputFailure("no piece with chord annotations could be prepared")
    a = cfg.ablation
    presets = (preset,) if preset else tuple(a.presets)
    components = PRESETS[preset] if preset else None
    acfg = AblationConfig(dict(a.ranges), presets, a.optimize, a.n_init, a.n_iter, cfg.seed)
    kw = {"components": components} if components else {}
    res = run_ablation(pieces, acfg, cfg.dictionary.params(), f_min=cfg.cqt.f_min,
                       bins_per_octave=cfg.cqt.bins_per_octave, median_width=cfg.dictionary.median_width,
                       **kw)
    report = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "components": list(res.components),
        "per_piece": res.per_piece,
        "corpus_mean": res.corpus_mean,
        "identity_score": res.identity_score,
        "component_table": res.component_table,
        "presets": res.presets,
        "winner": res.winner,
        "winning_params": res.winning_params,
        "skipped": sorted(o.piece_id for o in outcomes if o.ok and o.value is None),
    }
    if out_dir is not None:
        io.write_json(Path(out_dir) / "ablation.json", report)
        names = sorted(a.ranges)
        rows = []
        for pname, entry in res.presets.items():
            for t, step in enumerate(entry.get("trace", [])):
                rows.append([pname, t] + [step["params"].get(k) for k in names] + [step["score"]])
        io.write_table(Path(out_dir) / "ablation_trace.csv", ["preset", "trial"] + names + ["score"],
                       rows, cfg.digest(), cfg.seed)
    return report, outcomes
