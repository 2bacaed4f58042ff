"""Analysis and synthesis of unison (multi-singer, same-melody) vocals.

The main entry points are re-exported here; see the submodules for the
full API.
"""

from .analysis import (
    DeviationStats, TransitionStats, UnisonComparison, compare_unison_f0,
    inter_singer_deviation, transition_regions,
)
from .audio_io import AudioClip, load_wav, mix_and_normalize, save_wav
from .contour import F0Contour, UnisonGroup, cents_to_hz, hz_to_cents, mean_contour
from .metrics import MetricsReport, evaluate_melody
from .pitch import TrackerConfig, track_f0
from .synth import PRESETS, CloneParams, make_clone, solo_to_unison, unison_to_solo
from .vocoder import VocoderFeatures, analyze, synthesize

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "CloneParams", "DeviationStats", "F0Contour", "MetricsReport", "PRESETS",
    "TrackerConfig", "TransitionStats", "UnisonComparison", "UnisonGroup", "VocoderFeatures",
    "analyze", "cents_to_hz", "compare_unison_f0", "evaluate_melody", "hz_to_cents",
    "inter_singer_deviation", "load_wav", "make_clone", "mean_contour", "mix_and_normalize",
    "save_wav", "solo_to_unison", "synthesize", "track_f0", "transition_regions",
    "unison_to_solo",
]
