"""Component ablation and Bayesian tuning of the chroma dictionary against binary references."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .bayesopt import bayes_optimize
from .harmony import DictionaryParams, NNLSChroma
from .ingest import BeatGrid, ChromaSeries
from .spectral import CQTMatrix

logger = logging.getLogger(__name__)

COMPONENTS = {
    "WHI": "whiten",
    "MED": "median",
    "DEC": "decay",
    "ODD": "odd",
    "RES": "resonance",
    "INH": "inharmonicity",
}
PRESETS = {
    "A": ("WHI", "DEC"),
    "B": ("WHI", "DEC", "ODD", "RES"),
    "C": ("WHI", "DEC", "ODD", "RES", "INH", "MED"),
}
# search ranges; the default decay exponent sits inside each one, not at an edge
DEFAULT_RANGES = {
    "s": (0.3, 1.0),
    "gamma": (0.8, 1.5),
    "s_res": (0.5, 1.4),
    "beta": (0.0, 1e-3),
    "detune_cents": (-30.0, 30.0),
}
# which tunable belongs to which component; detuning is always searched
PARAM_OWNER = {"s": "DEC", "gamma": "ODD", "s_res": "RES", "beta": "INH", "detune_cents": None}


class AblationError(ValueError):
    pass


def toggles_for(components) -> dict:
    on = set(components)
    unknown = on - set(COMPONENTS)
    if unknown:
        raise AblationError(f"unknown components {sorted(unknown)}")
    return {attr: name in on for name, attr in COMPONENTS.items()}


def beat_cosine(estimated: ChromaSeries, reference: ChromaSeries) -> float:
    """Mean cosine similarity over beats valid and non-zero in both series."""
    if len(estimated) != len(reference):
        raise AblationError("chroma series cover different beat counts")
    E, R = estimated.values, reference.values
    ne, nr = np.linalg.norm(E, axis=0), np.linalg.norm(R, axis=0)
    use = estimated.valid & reference.valid & (ne > 0) & (nr > 0)
    if not use.any():
        raise AblationError("no scorable beats")
    cos = np.sum(E[:, use] * R[:, use], axis=0) / (ne[use] * nr[use])
    return float(np.clip(cos, 0.0, 1.0).mean())


@dataclass(frozen=True)
class AblationPiece:
    """One corpus item: harmonic-guitar CQT, beat grid and binary reference chroma."""

    piece_id: str
    cqt: CQTMatrix
    grid: BeatGrid
    reference: ChromaSeries


@dataclass(frozen=True)
class AblationConfig:
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    presets: tuple = ("A", "B", "C")
    optimize: bool = True
    n_init: int = 8
    n_iter: int = 32
    seed: int = 0

    def __post_init__(self):
        for name in self.presets:
            if name not in PRESETS:
                raise AblationError(f"unknown preset {name!r}")
        for k, (lo, hi) in self.ranges.items():
            if k not in PARAM_OWNER:
                raise AblationError(f"no tunable named {k!r}")
            if not lo < hi:
                raise AblationError(f"range for {k} must have lo < hi")


@dataclass
class AblationResult:
    per_piece: dict
    corpus_mean: float
    identity_score: float
    component_table: list
    presets: dict
    winner: str | None
    winning_params: dict
    components: tuple = tuple(COMPONENTS)


class ChromaScorer:
    """Memoized corpus score of a dictionary configuration.

    ``chroma_kw`` is forwarded to :class:`NNLSChroma` (CQT layout and
    median width).
    """

    def __init__(self, pieces, base: DictionaryParams | None = None, **chroma_kw):
        self.pieces = list(pieces)
        if not self.pieces:
            raise AblationError("empty corpus")
        self.base = base or DictionaryParams()
        self.chroma_kw = chroma_kw
        self._cache = {}

    def per_piece(self, p: DictionaryParams) -> dict:
        if p not in self._cache:
            est = NNLSChroma.from_params(p, **self.chroma_kw)
            self._cache[p] = {
                piece.piece_id: beat_cosine(est.beat_chroma(piece.cqt, piece.grid), piece.reference)
                for piece in self.pieces
            }
        return self._cache[p]

    def score(self, p: DictionaryParams) -> float:
        return float(np.mean(list(self.per_piece(p).values())))


def run_ablation(pieces, cfg: AblationConfig | None = None, base: DictionaryParams | None = None,
                 components=tuple(COMPONENTS), **chroma_kw) -> AblationResult:
    """Score component toggles and presets over a corpus.

    The component table reports, for each of ``components``, the score of
    the model with all of ``components`` on, with that one switched off
    (all else fixed), and of the identity model with only that component
    on. Presets are scored at the base parameters and, if
    ``cfg.optimize``, re-tuned by Bayesian optimization over the
    parameters their components own.
    """
    cfg = cfg or AblationConfig()
    scorer = ChromaScorer(pieces, base, **chroma_kw)
    base = scorer.base
    full = base.with_toggles(**toggles_for(components))
    identity = base.with_toggles(**toggles_for(()))
    full_score = scorer.score(full)
    identity_score = scorer.score(identity)
    table = []
    for name in components:
        attr = COMPONENTS[name]
        off = scorer.score(replace(full, **{attr: False}))
        alone = scorer.score(replace(identity, **{attr: True}))
        table.append({
            "component": name, "on": full_score, "off": off, "contribution": full_score - off,
            "alone": alone, "alone_gain": alone - identity_score,
        })
    presets = {}
    for name in cfg.presets:
        comps = PRESETS[name]
        p0 = base.with_toggles(**toggles_for(comps))
        entry = {
            "components": list(comps),
            "default_score": scorer.score(p0),
            "default_per_piece": scorer.per_piece(p0),
        }
        if cfg.optimize:
            ranges = {k: v for k, v in cfg.ranges.items()
                      if PARAM_OWNER[k] is None or PARAM_OWNER[k] in comps}

            def objective(params, p0=p0):
                return scorer.score(replace(p0, **params))

            best, best_score, trace = bayes_optimize(objective, ranges, cfg.n_init, cfg.n_iter, cfg.seed)
            entry.update(best_params=best, best_score=best_score,
                         trace=[{"params": q, "score": s} for q, s in trace])
        presets[name] = entry
    winner, winning = None, {}
    if presets:
        key = "best_score" if cfg.optimize else "default_score"
        winner = max(presets, key=lambda k: (presets[k][key], -ord(k)))
        winning = presets[winner].get("best_params", {})
    per_piece = scorer.per_piece(full)
    return AblationResult(per_piece, float(np.mean(list(per_piece.values()))), identity_score,
                          table, presets, winner, winning, tuple(components))
