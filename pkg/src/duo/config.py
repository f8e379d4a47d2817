"""Run configuration: nested dataclasses loaded from JSON with unknown keys rejected."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ablation import DEFAULT_RANGES, PRESETS
from .harmony import BODY_RESONANCES, E2, E6, TIV_WEIGHTS, DictionaryParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrameConfig:
    frame_len: int = 2048
    hop: int = 512


@dataclass(frozen=True)
class CQTConfig:
    f_min: float = 32.70
    bins_per_octave: int = 36
    n_bins: int = 252
    hop: int = 512


@dataclass(frozen=True)
class HPSSConfig:
    time_kernel: int = 31
    freq_kernel: int = 31


@dataclass(frozen=True)
class OnsetConfig:
    delta: float = 0.07
    window_s: float = 0.5
    min_gap_s: float = 0.05


@dataclass(frozen=True)
class ActivityConfig:
    threshold_db: float = -40.0
    interaction_fraction: float = 0.5


@dataclass(frozen=True)
class PitchConfig:
    frame_len: int = 2048
    hop: int = 256
    threshold: float = 0.15
    fmin: float = 60.0
    fmax: float = 1000.0
    silence_db: float = -50.0
    split_semitones: float = 0.6
    min_note_s: float = 0.08


@dataclass(frozen=True)
class DictionaryConfig:
    s: float = 0.5
    gamma: float = 0.95
    beta: float = 0.0
    s_res: float = 1.4
    resonances: tuple = BODY_RESONANCES
    n_partials: int = 20
    pitch_range: tuple = (E2, E6)
    detune_cents: float = 0.0
    deposit_width: float = 0.25
    decay: bool = True
    odd: bool = True
    inharmonicity: bool = True
    resonance: bool = True
    whiten: bool = True
    median: bool = True
    median_width: int = 5
    tiv_weights: tuple = TIV_WEIGHTS
    # fixed: denoise, then whiten, then decompose
    preprocessing_order: tuple = ("median", "whiten", "nnls")

    def params(self) -> DictionaryParams:
        names = DictionaryParams.__dataclass_fields__
        return DictionaryParams(**{k: getattr(self, k) for k in names})


@dataclass(frozen=True)
class EMDConfig:
    start_index: int = 3
    include_residue: bool = True
    sd_threshold: float = 0.2
    max_sifts: int = 10
    min_run: int = 8


@dataclass(frozen=True)
class StatsConfig:
    retain_threshold: float = 0.6
    min_support: int = 8
    bootstrap_samples: int = 1000
    block_len: int = 8
    ci_level: float = 0.95


@dataclass(frozen=True)
class ResidualConfig:
    z_threshold: float = 2.5
    huber_c: float = 1.345


@dataclass(frozen=True)
class AblationSettings:
    ranges: dict = field(default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_RANGES.items()})
    presets: tuple = ("A", "B", "C")
    n_init: int = 8
    n_iter: int = 32
    optimize: bool = True


@dataclass(frozen=True)
class RunConfig:
    frames: FrameConfig = field(default_factory=FrameConfig)
    cqt: CQTConfig = field(default_factory=CQTConfig)
    hpss: HPSSConfig = field(default_factory=HPSSConfig)
    onsets: OnsetConfig = field(default_factory=OnsetConfig)
    activity: ActivityConfig = field(default_factory=ActivityConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    emd: EMDConfig = field(default_factory=EMDConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    residuals: ResidualConfig = field(default_factory=ResidualConfig)
    ablation: AblationSettings = field(default_factory=AblationSettings)
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)

    def with_presets(self, presets) -> "RunConfig":
        return dataclasses.replace(self, ablation=dataclasses.replace(self.ablation, presets=tuple(presets)))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _validate(c: RunConfig):
    if c.seed < 0 or c.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    for name, v in (("frames.frame_len", c.frames.frame_len), ("frames.hop", c.frames.hop),
                    ("cqt.hop", c.cqt.hop), ("pitch.frame_len", c.pitch.frame_len),
                    ("pitch.hop", c.pitch.hop), ("cqt.n_bins", c.cqt.n_bins)):
        if v < 1:
            raise ConfigError(f"{name} must be positive")
    if not 0 < c.stats.retain_threshold < 1:
        raise ConfigError("stats.retain_threshold must lie in (0, 1)")
    if not 0 < c.stats.ci_level < 1:
        raise ConfigError("stats.ci_level must lie in (0, 1)")
    if c.stats.min_support < 3 or c.stats.block_len < 1 or c.stats.bootstrap_samples < 1:
        raise ConfigError("stats support, block length and sample count are too small")
    if c.residuals.z_threshold <= 0 or c.residuals.huber_c <= 0:
        raise ConfigError("residual thresholds must be positive")
    if c.emd.start_index < 1:
        raise ConfigError("emd.start_index counts from 1")
    if len(c.dictionary.tiv_weights) != 6:
        raise ConfigError("dictionary.tiv_weights needs six entries")
    if tuple(c.dictionary.preprocessing_order) != ("median", "whiten", "nnls"):
        raise ConfigError("preprocessing order is fixed to median, whiten, nnls")
    for p in c.ablation.presets:
        if p not in PRESETS:
            raise ConfigError(f"unknown preset {p!r}")
    for k, rng in c.ablation.ranges.items():
        if k not in DEFAULT_RANGES:
            raise ConfigError(f"no tunable named {k!r}")
        if len(rng) != 2 or not rng[0] < rng[1]:
            raise ConfigError(f"ablation range for {k} needs lo < hi")
    try:
        c.dictionary.params()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kw = {}
    for name, value in data.items():
        f = fields[name]
        path = f"{where}.{name}" if where else name
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if dataclasses.is_dataclass(default):
            kw[name] = _build(type(default), value, path)
        elif isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path} must be an object")
            kw[name] = {k: tuple(v) for k, v in value.items()}
        elif isinstance(default, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{path} must be a list")
            kw[name] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{path} must be true or false")
            kw[name] = value
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{path} must be an integer")
            kw[name] = value
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path} must be a number")
            kw[name] = float(value)
        else:
            kw[name] = value
    return cls(**kw)


def config_from_dict(data: dict) -> RunConfig:
    try:
        return _build(RunConfig, data, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> RunConfig:
    """Defaults when ``path`` is None, else the JSON file merged over them."""
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)
