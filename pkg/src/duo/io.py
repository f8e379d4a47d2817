"""Beat-indexed CSV and JSON report files.

Every file starts with a ``# config=<hash> seed=<seed>`` line. Floats are
written with ``repr`` so identical runs give identical bytes; masked or
undefined cells are empty.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .ingest import BeatGrid, ChromaSeries


class ReportError(ValueError):
    pass


def echo_line(config_hash: str, seed: int) -> str:
    return f"# config={config_hash} seed={seed}"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if np.isfinite(v) else ""
    return str(v)


def write_table(path, header, rows, config_hash: str, seed: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(echo_line(config_hash, seed) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_table(path):
    """``(header, rows, echo)`` where ``echo`` maps the comment-line keys."""
    path = Path(path)
    echo = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    echo[k] = v
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ReportError(f"{path} has no header")
    return rows[0], rows[1:], echo


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_descriptors(path, series, g: BeatGrid, config_hash: str, seed: int) -> None:
    """``beat_index,beat_time_s,<name>,<name>_mask,...`` with names in alphabetical order."""
    series = sorted(series, key=lambda s: s.name)
    for s in series:
        if len(s) != len(g):
            raise ReportError(f"{s.name} has {len(s)} values for {len(g)} beats")
    header = ["beat_index", "beat_time_s"]
    for s in series:
        header += [s.name, f"{s.name}_mask"]
    rows = []
    for b in range(len(g)):
        row = [b, float(g.beat_times[b])]
        for s in series:
            row += [float(s.values[b]) if s.mask[b] else None, bool(s.mask[b])]
        rows.append(row)
    write_table(path, header, rows, config_hash, seed)


def read_descriptors(path):
    """``(beat_times, {name: (values, mask)})``; masked values come back NaN."""
    header, rows, _ = read_table(path)
    if header[:2] != ["beat_index", "beat_time_s"]:
        raise ReportError(f"{path}: unexpected header {header[:2]}")
    names = header[2::2]
    if header[3::2] != [f"{n}_mask" for n in names]:
        raise ReportError(f"{path}: every descriptor column needs a mask column")
    times = np.array([float(r[1]) for r in rows])
    table = {}
    for k, name in enumerate(names):
        col = 2 + 2 * k
        mask = np.array([r[col + 1] == "1" for r in rows])
        vals = np.array([float(r[col]) if r[col] != "" else np.nan for r in rows])
        if np.any(mask & ~np.isfinite(vals)):
            raise ReportError(f"{path}: active {name} beat without a value")
        table[name] = (vals, mask)
    return times, table


def write_chroma(path, c: ChromaSeries, config_hash: str, seed: int) -> None:
    header = ["beat_index"] + [f"pc{k}" for k in range(12)] + ["valid"]
    rows = [[b] + [float(v) if c.valid[b] else None for v in c.values[:, b]] + [bool(c.valid[b])]
            for b in range(len(c))]
    write_table(path, header, rows, config_hash, seed)


def read_chroma(path) -> ChromaSeries:
    _, rows, _ = read_table(path)
    valid = np.array([r[13] == "1" for r in rows])
    vals = np.array([[float(x) if x != "" else 0.0 for x in r[1:13]] for r in rows]).T
    return ChromaSeries(vals.reshape(12, len(rows)), valid)


def write_tiv(path, T, dissonance, dispersion, valid, config_hash: str, seed: int) -> None:
    header = ["beat_index"]
    for k in range(1, 7):
        header += [f"re{k}", f"im{k}"]
    header += ["dissonance", "dispersion", "valid"]
    rows = []
    for b in range(len(valid)):
        ok = bool(valid[b])
        row = [b]
        for k in range(6):
            row += [float(T[b, k].real), float(T[b, k].imag)] if ok else [None, None]
        row += [float(dissonance[b]) if ok else None, float(dispersion[b]) if ok else None, ok]
        rows.append(row)
    write_table(path, header, rows, config_hash, seed)


def write_segments(path, g: BeatGrid, config_hash: str, seed: int) -> None:
    rows = [[b, float(g.beat_times[b]), g.section_of(b), g.phrase_of(b)] for b in range(len(g))]
    write_table(path, ["beat_index", "beat_time_s", "section", "phrase"], rows, config_hash, seed)


def read_segments(path):
    """``(sections, phrases)`` label lists, one entry per beat."""
    _, rows, _ = read_table(path)
    return [r[2] for r in rows], [r[3] for r in rows]


def write_notes(path, notes, config_hash: str, seed: int) -> None:
    write_table(path, ["onset_s", "offset_s", "f0_hz"], [list(n) for n in notes.notes], config_hash, seed)
