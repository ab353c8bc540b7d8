"""Objective metrics: pitch entropy, rhythm entropy, harmonic consistency
and melodic smoothness, plus Krumhansl-Schmuckler key finding."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .pianoroll import PianoRoll, pianoroll_to_events

# Krumhansl-Kessler probe-tone ratings, tonic first
MAJOR_PROFILE = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
MINOR_PROFILE = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)  # natural minor

PITCH_NAMES = ("C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B")

LARGE_LEAP = 5  # a perfect fourth; only strictly larger intervals count


def _require(events, n=1, what="events"):
    if len(events) < n:
        raise ValueError(f"need at least {n} {what}, got {len(events)}")


def entropy_bits(counts) -> float:
    counts = np.asarray([c for c in counts if c > 0], dtype=np.float64)
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    return float(max(0.0, -(p * np.log2(p)).sum()))


def pitch_entropy(events) -> float:
    _require(events)
    return entropy_bits(Counter(e.pitch for e in events).values())


def rhythm_entropy(events) -> float:
    _require(events)
    return entropy_bits(Counter(e.duration for e in events).values())


def pitch_class_histogram(events) -> np.ndarray:
    """Duration-weighted pitch-class totals."""
    hist = np.zeros(12)
    for e in events:
        hist[e.pitch % 12] += e.duration
    return hist


def key_correlations(hist) -> np.ndarray:
    """Pearson correlation with the 12 major then the 12 minor key profiles."""
    hist = np.asarray(hist, dtype=np.float64)
    out = np.zeros(24)
    hc = hist - hist.mean()
    hn = np.sqrt((hc * hc).sum())
    for mode, profile in enumerate((MAJOR_PROFILE, MINOR_PROFILE)):
        for tonic in range(12):
            prof = np.roll(profile, tonic)
            pc = prof - prof.mean()
            denom = hn * np.sqrt((pc * pc).sum())
            # a flat histogram correlates with nothing
            out[12 * mode + tonic] = hc @ pc / denom if denom > 0 else 0.0
    return out


def detect_key(events) -> tuple[int, str]:
    """Best-correlating key as ``(tonic pitch class, "major" | "minor")``.

    Exact ties resolve to the major key, then to the lower tonic.
    """
    _require(events)
    corr = key_correlations(pitch_class_histogram(events))
    best = int(np.argmax(corr))
    return best % 12, "major" if best < 12 else "minor"


def scale_pitch_classes(tonic: int, mode: str) -> frozenset:
    steps = MAJOR_SCALE if mode == "major" else MINOR_SCALE
    return frozenset((tonic + s) % 12 for s in steps)


def harmonic_consistency(events, key=None) -> float:
    """Share of notes whose pitch class lies in the detected key's diatonic scale."""
    _require(events)
    scale = scale_pitch_classes(*(key or detect_key(events)))
    return sum(e.pitch % 12 in scale for e in events) / len(events)


def skyline(events) -> list[int]:
    """Highest pitch at each distinct onset, in time order."""
    top = {}
    for e in events:
        if e.pitch > top.get(e.onset, -1):
            top[e.onset] = e.pitch
    return [top[t] for t in sorted(top)]


def melodic_smoothness(events) -> float:
    """Fraction of melodic intervals larger than a perfect fourth."""
    melody = skyline(events)
    _require(melody, 2, "melody notes")
    intervals = np.abs(np.diff(melody))
    return float((intervals > LARGE_LEAP).mean())


@dataclass
class MetricReport:
    pitch_entropy: float
    rhythm_entropy: float
    harmonic_consistency: float
    melodic_smoothness: float | None
    detected_key: tuple

    def as_dict(self):
        out = asdict(self)
        out["detected_key"] = list(self.detected_key)
        return out

    @property
    def key_name(self):
        tonic, mode = self.detected_key
        return f"{PITCH_NAMES[tonic]} {mode}"


def evaluate_events(events) -> MetricReport:
    if not events:
        raise ValueError("cannot evaluate a silent piece")
    key = detect_key(events)
    try:
        smooth = melodic_smoothness(events)
    except ValueError:
        smooth = None
    return MetricReport(pitch_entropy(events), rhythm_entropy(events),
                        harmonic_consistency(events, key), smooth, key)


def evaluate(roll: PianoRoll) -> MetricReport:
    return evaluate_events(pianoroll_to_events(roll))


TABLE_COLUMNS = ("Pitch", "Rhythm", "Harmony", "Melody")


def table_row(report: MetricReport) -> dict:
    return {"Pitch": report.pitch_entropy, "Rhythm": report.rhythm_entropy,
            "Harmony": report.harmonic_consistency, "Melody": report.melodic_smoothness}


def corpus_mean(reports) -> dict:
    """Column means in table layout; pieces without a melody value are skipped for that column."""
    rows = [table_row(r) for r in reports]
    out = {}
    for col in TABLE_COLUMNS:
        vals = [r[col] for r in rows if r[col] is not None]
        out[col] = float(np.mean(vals)) if vals else None
    return out
