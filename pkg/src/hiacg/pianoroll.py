"""Binary piano rolls, note-event extraction and MIDI conversion."""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyContentError, ShapeError
from .midi import read_midi, write_midi

N_PITCHES = 88
LOWEST_PITCH = 21  # A0
HIGHEST_PITCH = LOWEST_PITCH + N_PITCHES - 1  # C8
STEPS_PER_QUARTER = 4
STEPS_PER_MEASURE = 16

_ROLL_MAGIC = b"PROL"
_ROLL_VERSION = 1


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset: int
    duration: int


@dataclass(frozen=True, eq=False)
class PianoRoll:
    """88 x T binary activation grid; row 0 is MIDI pitch 21."""

    grid: np.ndarray
    resolution: int = STEPS_PER_QUARTER
    tempo_bpm: float = 120.0

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2 or grid.shape[0] != N_PITCHES:
            raise ShapeError(f"piano roll must have {N_PITCHES} rows, got shape {grid.shape}")
        if grid.shape[1] < 1:
            raise ShapeError("piano roll needs at least one time step")
        if grid.dtype != np.uint8:
            if not np.isin(grid, (0, 1)).all():
                raise ValueError("piano roll cells must be 0 or 1")
            grid = grid.astype(np.uint8)
        elif grid.max(initial=0) > 1:
            raise ValueError("piano roll cells must be 0 or 1")
        grid = grid.copy()
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        if self.tempo_bpm <= 0:
            raise ValueError("tempo must be positive")

    @property
    def n_steps(self) -> int:
        return self.grid.shape[1]

    @property
    def n_measures(self) -> int:
        return -(-self.n_steps // STEPS_PER_MEASURE)

    def __eq__(self, other):
        if not isinstance(other, PianoRoll):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool((self.grid == other.grid).all())

    def padded(self, multiple: int = STEPS_PER_MEASURE) -> "PianoRoll":
        """Zero-pad the time axis up to a multiple of ``multiple``."""
        extra = -self.n_steps % multiple
        if not extra:
            return self
        grid = np.pad(self.grid, ((0, 0), (0, extra)))
        return PianoRoll(grid, self.resolution, self.tempo_bpm)

    def crop(self, start: int, stop: int) -> "PianoRoll":
        return PianoRoll(self.grid[:, start:stop], self.resolution, self.tempo_bpm)

    @classmethod
    def zeros(cls, n_steps: int, tempo_bpm: float = 120.0) -> "PianoRoll":
        return cls(np.zeros((N_PITCHES, n_steps), np.uint8), tempo_bpm=tempo_bpm)


def _half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def midi_to_pianoroll(midi_bytes: bytes, quantize: int = STEPS_PER_QUARTER) -> PianoRoll:
    """Quantize an SMF onto the 1/16-beat grid.

    All tracks and channels are merged into a single 88-row grid. Onsets and
    durations round half-up to the nearest step; every note lasts at least one
    step. Notes outside the piano range are dropped with a warning. The time
    axis is padded with silence to a whole number of 4/4 measures.
    """
    content = read_midi(midi_bytes)
    scale = quantize / content.ticks_per_quarter
    kept = [n for n in content.notes if LOWEST_PITCH <= n.pitch <= HIGHEST_PITCH]
    dropped = len(content.notes) - len(kept)
    if dropped:
        warnings.warn(f"dropped {dropped} note(s) outside MIDI pitch range "
                      f"[{LOWEST_PITCH}, {HIGHEST_PITCH}]", stacklevel=2)
    if not kept:
        raise EmptyContentError("MIDI file contains no notes in the piano range")
    onsets = _half_up([n.start_tick * scale for n in kept])
    durations = np.maximum(1, _half_up([(n.end_tick - n.start_tick) * scale for n in kept]))
    n_steps = int((onsets + durations).max())
    n_steps += -n_steps % STEPS_PER_MEASURE
    grid = np.zeros((N_PITCHES, n_steps), np.uint8)
    for note, on, dur in zip(kept, onsets, durations):
        grid[note.pitch - LOWEST_PITCH, on:on + dur] = 1
    return PianoRoll(grid, quantize, content.tempo_bpm)


def pianoroll_to_events(roll: PianoRoll) -> list[NoteEvent]:
    """One event per maximal run of active cells in a pitch row."""
    padded = np.zeros((N_PITCHES, roll.n_steps + 2), np.int8)
    padded[:, 1:-1] = roll.grid
    diff = np.diff(padded, axis=1)
    rows_on, starts = np.nonzero(diff == 1)
    rows_off, stops = np.nonzero(diff == -1)
    # nonzero scans row-major, so starts and stops pair up in order
    events = [NoteEvent(int(r) + LOWEST_PITCH, int(s), int(e - s))
              for r, s, e in zip(rows_on, starts, stops)]
    events.sort(key=lambda ev: (ev.onset, ev.pitch))
    return events


def events_to_pianoroll(events, n_steps: int | None = None, tempo_bpm: float = 120.0) -> PianoRoll:
    """Paint events onto a fresh grid (length defaults to the last offset)."""
    end = max((e.onset + e.duration for e in events), default=0)
    n_steps = end if n_steps is None else n_steps
    if n_steps < end:
        raise ShapeError(f"events extend to step {end}, beyond n_steps={n_steps}")
    grid = np.zeros((N_PITCHES, max(n_steps, 1)), np.uint8)
    for e in events:
        grid[e.pitch - LOWEST_PITCH, e.onset:e.onset + e.duration] = 1
    return PianoRoll(grid, tempo_bpm=tempo_bpm)


def events_to_midi(events, tempo_bpm: float = 120.0, ticks_per_quarter: int = 480) -> bytes:
    if not events:
        raise EmptyContentError("cannot write a MIDI file with no notes")
    ticks_per_step = ticks_per_quarter // STEPS_PER_QUARTER
    notes = [(e.pitch, e.onset * ticks_per_step, (e.onset + e.duration) * ticks_per_step)
             for e in events]
    return write_midi(notes, ticks_per_quarter, tempo_bpm)


def pianoroll_to_midi(roll: PianoRoll) -> bytes:
    return events_to_midi(pianoroll_to_events(roll), roll.tempo_bpm)


# Roll container layout (little-endian):
#   4s magic "PROL" | u8 version | u16 D | u32 T | f32 tempo | u8 resolution
#   followed by ceil(D*T/8) bytes of the row-major grid, bit-packed MSB first.
_ROLL_HEADER = struct.Struct("<4sBHIfB")


def save_roll(roll: PianoRoll) -> bytes:
    d, t = roll.grid.shape
    header = _ROLL_HEADER.pack(_ROLL_MAGIC, _ROLL_VERSION, d, t, roll.tempo_bpm, roll.resolution)
    return header + np.packbits(roll.grid.reshape(-1)).tobytes()


def load_roll(data: bytes) -> PianoRoll:
    if len(data) < _ROLL_HEADER.size:
        raise ValueError("truncated roll container")
    magic, version, d, t, tempo, resolution = _ROLL_HEADER.unpack_from(data)
    if magic != _ROLL_MAGIC:
        raise ValueError("not a piano-roll container")
    if version != _ROLL_VERSION:
        raise ValueError(f"unsupported roll container version {version}")
    bits = np.frombuffer(data, np.uint8, offset=_ROLL_HEADER.size)
    cells = np.unpackbits(bits)[:d * t]
    if cells.size != d * t:
        raise ValueError("truncated roll container payload")
    return PianoRoll(cells.reshape(d, t), resolution, float(tempo))
