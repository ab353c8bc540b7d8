import struct
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_roll
from hiacg.errors import EmptyContentError, MidiParseError, ShapeError
from hiacg.midi import read_midi, write_midi
from hiacg.pianoroll import (N_PITCHES, NoteEvent, PianoRoll, events_to_midi, events_to_pianoroll, load_roll,
                             midi_to_pianoroll, pianoroll_to_events, pianoroll_to_midi, save_roll)


def _smf(track_body: bytes, tpq=480, fmt=0, ntrks=1):
    header = b"MThd" + struct.pack(">IHHH", 6, fmt, ntrks, tpq)
    return header + b"MTrk" + struct.pack(">I", len(track_body)) + track_body


def _single_note(pitch, on=0, off=480, tpq=480):
    return write_midi([(pitch, on, off)], tpq)


# -- PianoRoll ---------------------------------------------------------------

def test_roll_invariants():
    with pytest.raises(ShapeError):
        PianoRoll(np.zeros((87, 16), np.uint8))
    with pytest.raises(ShapeError):
        PianoRoll(np.zeros((88, 0), np.uint8))
    with pytest.raises(ValueError):
        PianoRoll(np.full((88, 4), 2, np.uint8))
    roll = PianoRoll.zeros(16)
    assert roll.n_steps == 16 and roll.n_measures == 1
    with pytest.raises(ValueError):
        roll.grid[0, 0] = 1


def test_padding_and_crop():
    roll = PianoRoll(np.ones((88, 5), np.uint8))
    padded = roll.padded()
    assert padded.n_steps == 16
    assert padded.grid[:, :5].all() and not padded.grid[:, 5:].any()
    assert padded.crop(0, 5) == roll


# -- MIDI ingestion ------------------------------------------------------------

def test_single_quarter_note():
    roll = midi_to_pianoroll(_single_note(60))
    assert roll.n_steps == 16
    expected = np.zeros((88, 16), np.uint8)
    expected[39, 0:4] = 1
    np.testing.assert_array_equal(roll.grid, expected)


def test_no_notes_is_empty_content():
    body = b"\x00\xff\x2f\x00"
    with pytest.raises(EmptyContentError):
        midi_to_pianoroll(_smf(body))


def test_out_of_range_only_is_empty_content():
    with pytest.warns(UserWarning, match="dropped 1"):
        with pytest.raises(EmptyContentError):
            midi_to_pianoroll(_single_note(20))


def test_out_of_range_notes_are_counted():
    data = write_midi([(20, 0, 480), (60, 0, 480), (109, 0, 480)])
    with pytest.warns(UserWarning, match="dropped 2"):
        roll = midi_to_pianoroll(data)
    assert roll.grid.sum() == 4


def test_quantization_rounds_half_up_and_min_duration():
    # 480 tpq -> 120 ticks per step. onset 60 ticks = 0.5 step -> 1; a 10 tick note -> 1 step
    roll = midi_to_pianoroll(write_midi([(60, 60, 70), (62, 179, 420)]))
    assert pianoroll_to_events(roll) == [NoteEvent(60, 1, 1), NoteEvent(62, 1, 2)]


def test_running_status_and_note_on_zero_velocity():
    # note on 60, running-status note-on velocity 0 ends it
    body = b"\x00\x90\x3c\x40" + b"\x83\x60\x3c\x00" + b"\x00\xff\x2f\x00"
    roll = midi_to_pianoroll(_smf(body))
    assert pianoroll_to_events(roll) == [NoteEvent(60, 0, 4)]


def test_format1_tracks_are_merged():
    def track(pitch):
        body = bytes([0, 0x90, pitch, 64]) + b"\x83\x60" + bytes([0x80, pitch, 0]) + b"\x00\xff\x2f\x00"
        return b"MTrk" + struct.pack(">I", len(body)) + body
    data = b"MThd" + struct.pack(">IHHH", 6, 1, 2, 480) + track(60) + track(64)
    roll = midi_to_pianoroll(data)
    assert [e.pitch for e in pianoroll_to_events(roll)] == [60, 64]


def test_tempo_is_read():
    data = write_midi([(60, 0, 480)], tempo_bpm=90)
    assert abs(read_midi(data).tempo_bpm - 90) < 1e-3


@pytest.mark.parametrize("data, offset", [
    (b"RIFF" + b"\x00" * 10, 0),
    (b"MThd" + struct.pack(">IHHH", 6, 0, 1, 0x8000 | 0x1E28), 12),
])
def test_malformed_header_reports_offset(data, offset):
    with pytest.raises(MidiParseError) as info:
        read_midi(data)
    assert info.value.offset == offset
    assert f"byte offset {offset}" in str(info.value)


def test_truncated_track_reports_offset():
    good = _single_note(60)
    with pytest.raises(MidiParseError) as info:
        read_midi(good[:-3])
    assert 14 <= info.value.offset <= len(good)


# -- events ------------------------------------------------------------------

def test_events_single_run():
    grid = np.zeros((88, 16), np.uint8)
    grid[39, 0:4] = 1
    assert pianoroll_to_events(PianoRoll(grid)) == [NoteEvent(60, 0, 4)]


def test_events_split_runs():
    grid = np.zeros((88, 16), np.uint8)
    grid[39, [0, 1, 3, 4]] = 1
    assert [e.duration for e in pianoroll_to_events(PianoRoll(grid))] == [2, 2]


def test_events_empty_roll():
    assert pianoroll_to_events(PianoRoll.zeros(16)) == []


def test_events_to_midi_single_note_round_trip():
    events = [NoteEvent(60, 0, 4)]
    roll = midi_to_pianoroll(events_to_midi(events, tempo_bpm=120))
    assert pianoroll_to_events(roll) == events and roll.n_steps == 16


def test_events_to_midi_chord_round_trip():
    events = [NoteEvent(60, 0, 4), NoteEvent(64, 0, 4)]
    roll = midi_to_pianoroll(events_to_midi(events))
    assert pianoroll_to_events(roll) == events


def test_events_to_midi_empty():
    with pytest.raises(EmptyContentError):
        events_to_midi([])


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.floats(0.02, 0.5))
def test_midi_round_trip_property(seed, measures, density):
    roll = random_roll(np.random.default_rng(seed), 16 * measures, density)
    if not roll.grid.any():
        return
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        back = midi_to_pianoroll(pianoroll_to_midi(roll))
    # trailing silence is dropped by MIDI and restored by padding
    assert back == roll


@given(st.integers(0, 2**32 - 1), st.integers(1, 80))
def test_events_partition_property(seed, n_steps):
    roll = random_roll(np.random.default_rng(seed), n_steps, 0.3)
    events = pianoroll_to_events(roll)
    assert sum(e.duration for e in events) == roll.grid.sum()
    assert all(e.onset + e.duration <= roll.n_steps and e.duration >= 1 for e in events)
    by_pitch = {}
    for e in events:
        by_pitch.setdefault(e.pitch, []).append((e.onset, e.onset + e.duration))
    for spans in by_pitch.values():
        spans.sort()
        # disjoint and not touching (touching runs would have merged)
        assert all(a[1] < b[0] for a, b in zip(spans, spans[1:]))
    assert events_to_pianoroll(events, roll.n_steps) == roll


def test_overlapping_same_pitch_notes_merge():
    roll = midi_to_pianoroll(write_midi([(60, 0, 480), (60, 240, 960)]))
    assert pianoroll_to_events(roll) == [NoteEvent(60, 0, 8)]


def test_roll_container_round_trip(rng):
    roll = PianoRoll(random_roll(rng, 48).grid, tempo_bpm=97.5)
    back = load_roll(save_roll(roll))
    assert back == roll and back.tempo_bpm == 97.5
    with pytest.raises(ValueError):
        load_roll(b"XXXX" + save_roll(roll)[4:])
