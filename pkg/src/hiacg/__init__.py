"""Long-sequence symbolic music generation with anchored cyclic decoding.

Piano rolls are cut into small pitch x time patches (piano tokens). A semantic
decoder predicts one feature per block, a reconstruction decoder turns it into
the block's tokens, and the finished block is re-embedded as an anchor for the
next step. Two such loops, sketch then refinement, build a full piece.
"""
from .acg import AcgConfig, AcgModel, Condition, Example, TrainConfig
from .baseline import BaselineConfig, FlatArModel, matched_config
from .errors import (ConfigError, EmptyContentError, HiAcgError, MidiParseError, ShapeError,
                     StateError)
from .hierarchy import HiAcg, resample_sketch
from .metrics import MetricReport, detect_key, evaluate
from .pianoroll import NoteEvent, PianoRoll, midi_to_pianoroll, pianoroll_to_events, pianoroll_to_midi
from .sampling import GREEDY, SamplerConfig
from .tokens import DEFAULT_PATCH, PatchConfig, TokenMatrix, decode, encode

__version__ = "0.1.0"

__all__ = ["AcgConfig", "AcgModel", "Condition", "Example", "TrainConfig", "BaselineConfig", "FlatArModel",
           "matched_config", "ConfigError", "EmptyContentError", "HiAcgError", "MidiParseError", "ShapeError",
           "StateError", "HiAcg", "resample_sketch", "MetricReport", "detect_key", "evaluate", "NoteEvent",
           "PianoRoll", "midi_to_pianoroll", "pianoroll_to_events", "pianoroll_to_midi", "GREEDY",
           "SamplerConfig", "DEFAULT_PATCH", "PatchConfig", "TokenMatrix", "decode", "encode"]
