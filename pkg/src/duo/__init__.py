"""Beat-level interaction analysis of voice/guitar duo recordings from separated stems."""

from .ablation import AblationConfig, beat_cosine, run_ablation
from .bayesopt import bayes_optimize
from .config import RunConfig, load_config
from .descriptors import DescriptorSeries
from .emd import EMDSmoother, emd
from .harmony import DictionaryParams, NNLSChroma, build_dictionary, partial_amplitudes
from .ingest import AnnotationSet, AudioBuffer, BeatGrid, build_beat_grid, load_audio, parse_annotations
from .nnls import nnls
from .robust import HuberLine
from .stats import correlation_matrix, fisher_aggregate

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "AnnotationSet",
    "AudioBuffer",
    "BeatGrid",
    "DescriptorSeries",
    "DictionaryParams",
    "EMDSmoother",
    "HuberLine",
    "NNLSChroma",
    "RunConfig",
    "bayes_optimize",
    "beat_cosine",
    "build_beat_grid",
    "build_dictionary",
    "correlation_matrix",
    "emd",
    "fisher_aggregate",
    "load_audio",
    "load_config",
    "nnls",
    "parse_annotations",
    "partial_amplitudes",
    "run_ablation",
]
