"""Experiment harnesses: toy corpus, training loop, drift, complexity, ablations."""
from .ablation import ablation_sweep, format_table
from .complexity import ComplexityReport, complexity_bench
from .corpus import load_corpus, load_piece, make_piece, make_toy_corpus, write_corpus
from .drift import DriftCurve, drift_experiment
from .manifest import build_manifest, write_manifest
from .training import train

__all__ = ["ablation_sweep", "format_table", "ComplexityReport", "complexity_bench", "load_corpus", "load_piece",
           "make_piece", "make_toy_corpus", "write_corpus", "DriftCurve", "drift_experiment", "build_manifest",
           "write_manifest", "train"]
