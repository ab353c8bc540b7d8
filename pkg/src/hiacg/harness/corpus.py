"""Procedural toy corpus and corpus directory I/O."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..metrics import evaluate
from ..pianoroll import (N_PITCHES, LOWEST_PITCH, STEPS_PER_MEASURE, PianoRoll, load_roll,
                         midi_to_pianoroll, pianoroll_to_midi, save_roll)

MAJOR = (0, 2, 4, 5, 7, 9, 11)
NATURAL_MINOR = (0, 2, 3, 5, 7, 8, 10)

# scale-degree roots (0-based) of four-chord loops
PROGRESSIONS = (
    (0, 4, 5, 3),  # I V vi IV
    (0, 3, 4, 0),  # I IV V I
    (0, 5, 1, 4),  # I vi ii V
    (0, 5, 3, 4),  # I vi IV V
    (0, 3, 0, 4),  # I IV I V
)

# left-hand patterns: (offset within measure, duration, chord tone index or None for full triad)
ACCOMPANIMENT = (
    ((0, 16, None),),
    ((0, 8, None), (8, 8, None)),
    ((0, 4, 0), (4, 4, 1), (8, 4, 2), (12, 4, 1)),
    ((0, 2, 0), (2, 2, 1), (4, 2, 2), (6, 2, 1), (8, 2, 0), (10, 2, 1), (12, 2, 2), (14, 2, 1)),
)

# melody rhythms for one measure, as note durations summing to 16 steps
RHYTHMS = (
    (4, 4, 4, 4),
    (8, 4, 4),
    (4, 4, 8),
    (2, 2, 4, 4, 4),
    (4, 2, 2, 4, 4),
    (6, 2, 4, 4),
    (16,),
)


def _degree_pitch(scale, tonic_pitch, degree):
    octave, step = divmod(degree, 7)
    return tonic_pitch + 12 * octave + scale[step]


def make_piece(rng: np.random.Generator, n_measures: int) -> PianoRoll:
    """One diatonic piece: looping four-chord progression, left-hand pattern, motif-based melody."""
    scale = MAJOR if rng.random() < 0.7 else NATURAL_MINOR
    tonic = int(rng.integers(0, 12))
    bass_tonic = 36 + tonic  # around C2..B2
    mel_tonic = 60 + tonic   # around C4..B4
    prog = PROGRESSIONS[int(rng.integers(len(PROGRESSIONS)))]
    accomp = ACCOMPANIMENT[int(rng.integers(len(ACCOMPANIMENT)))]
    # a two-measure motif of chord-relative scale degrees, reused with variation
    motif = []
    for _ in range(2):
        rhythm = RHYTHMS[int(rng.integers(len(RHYTHMS)))]
        degrees = [int(d) for d in rng.choice([0, 1, 2, 3, 4, 5, 6, 7], size=len(rhythm),
                                              p=[.25, .08, .2, .07, .2, .08, .04, .08])]
        motif.append(list(zip(rhythm, degrees)))
    grid = np.zeros((N_PITCHES, n_measures * STEPS_PER_MEASURE), np.uint8)

    def put(pitch, start, dur):
        row = pitch - LOWEST_PITCH
        if 0 <= row < N_PITCHES:
            grid[row, start:start + dur] = 1

    for m in range(n_measures):
        root = prog[m % len(prog)] if m < n_measures - 1 else 0
        base = m * STEPS_PER_MEASURE
        triad = [_degree_pitch(scale, bass_tonic, root + k) for k in (0, 2, 4)]
        for offset, dur, idx in accomp:
            for pitch in (triad if idx is None else [triad[idx]]):
                # leave a one-step gap so repeated notes stay distinct events
                put(pitch, base + offset, max(1, dur - 1) if dur > 1 else 1)
        phrase = motif[m % 2]
        if m == n_measures - 1 or (m % 4 == 3 and rng.random() < 0.5):
            phrase = [(16, 0)]  # cadence: hold the chord root
        t = base
        for dur, deg in phrase:
            put(_degree_pitch(scale, mel_tonic, root + deg), t, max(1, dur - 1) if dur > 1 else 1)
            t += dur
    return PianoRoll(grid)


MIN_TONAL_FIT = 0.9


def make_toy_corpus(n_pieces: int, seed: int = 0, min_measures: int = 4, max_measures: int = 16) -> list[PianoRoll]:
    """Deterministic per seed. Pieces whose key-finding result fits less than 90%
    of their notes (an ambiguous tonal centre) are redrawn."""
    if n_pieces < 1:
        raise ValueError("n_pieces must be at least 1")
    if not 1 <= min_measures <= max_measures:
        raise ValueError("need 1 <= min_measures <= max_measures")
    rng = np.random.default_rng(seed)
    pieces = []
    while len(pieces) < n_pieces:
        piece = make_piece(rng, int(rng.integers(min_measures, max_measures + 1)))
        if evaluate(piece).harmonic_consistency >= MIN_TONAL_FIT:
            pieces.append(piece)
    return pieces


ROLL_SUFFIXES = (".mid", ".midi", ".prol")


def load_piece(path) -> PianoRoll:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".prol":
        return load_roll(data)
    return midi_to_pianoroll(data)


def load_corpus(directory) -> list[PianoRoll]:
    directory = Path(directory)
    if directory.is_file():
        return [load_piece(directory)]
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in ROLL_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no .mid/.midi/.prol files in {directory}")
    return [load_piece(p) for p in files]


def write_corpus(rolls, directory, fmt="mid") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, roll in enumerate(rolls):
        path = directory / f"piece_{i:04d}.{fmt}"
        path.write_bytes(pianoroll_to_midi(roll) if fmt == "mid" else save_roll(roll))
        paths.append(path)
    return paths
