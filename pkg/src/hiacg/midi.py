"""Standard MIDI File reading (formats 0 and 1) and format-0 writing.

Only what the piano-roll pipeline needs is decoded: note on/off pairs and
the first tempo meta-event. Everything else is skipped over.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import MidiParseError

DEFAULT_TEMPO_BPM = 120.0


@dataclass(frozen=True)
class RawNote:
    pitch: int
    start_tick: int
    end_tick: int
    channel: int = 0


@dataclass
class MidiContent:
    notes: list
    ticks_per_quarter: int
    tempo_bpm: float
    format: int


def _read_vlq(data, pos, end):
    value = 0
    for _ in range(4):
        if pos >= end:
            raise MidiParseError("truncated variable-length quantity", pos)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiParseError("variable-length quantity longer than 4 bytes", pos)


def _write_vlq(value):
    if value < 0:
        raise ValueError("negative delta time")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


# data-byte counts for channel voice messages, keyed by status high nibble
_CHANNEL_DATA_LEN = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


def _parse_track(data, pos, end, notes, tempos):
    tick = 0
    status = None
    pending = {}  # (channel, pitch) -> list of start ticks, FIFO
    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise MidiParseError("event missing after delta time", pos)
        byte = data[pos]
        if byte == 0xFF:
            if pos + 2 > end:
                raise MidiParseError("truncated meta event", pos)
            meta_type = data[pos + 1]
            length, body = _read_vlq(data, pos + 2, end)
            if body + length > end:
                raise MidiParseError("meta event overruns track", pos)
            if meta_type == 0x51 and length == 3:
                mpqn = int.from_bytes(data[body:body + 3], "big")
                if mpqn > 0:
                    tempos.append((tick, 60_000_000.0 / mpqn))
            pos = body + length
            if meta_type == 0x2F:
                break
            continue
        if byte in (0xF0, 0xF7):
            length, body = _read_vlq(data, pos + 1, end)
            if body + length > end:
                raise MidiParseError("sysex event overruns track", pos)
            pos = body + length
            continue
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise MidiParseError("data byte without running status", pos)
        kind = status >> 4
        if kind not in _CHANNEL_DATA_LEN:
            raise MidiParseError(f"unsupported status byte 0x{status:02X}", pos)
        n = _CHANNEL_DATA_LEN[kind]
        if pos + n > end:
            raise MidiParseError("truncated channel message", pos)
        args = data[pos:pos + n]
        pos += n
        channel = status & 0x0F
        if kind == 0x9 and args[1] > 0:
            pending.setdefault((channel, args[0]), []).append(tick)
        elif kind == 0x8 or kind == 0x9:
            starts = pending.get((channel, args[0]))
            if starts:
                start = starts.pop(0)
                notes.append(RawNote(args[0], start, tick, channel))
    # notes never switched off end at the last event of the track
    for (channel, pitch), starts in pending.items():
        for start in starts:
            notes.append(RawNote(pitch, start, max(tick, start), channel))


def read_midi(midi_bytes: bytes) -> MidiContent:
    """Parse SMF bytes into raw notes (tick units) plus tempo and timing base."""
    data = bytes(midi_bytes)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError("missing MThd header chunk", 0)
    (hlen,) = struct.unpack(">I", data[4:8])
    if hlen < 6 or 8 + hlen > len(data):
        raise MidiParseError("bad header length", 4)
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks per quarter note", 12)
    pos = 8 + hlen
    notes: list = []
    tempos: list = []
    for _ in range(ntracks):
        if pos + 8 > len(data):
            raise MidiParseError("truncated track chunk header", pos)
        chunk_id = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + length > len(data):
            raise MidiParseError("track chunk overruns file", pos)
        if chunk_id == b"MTrk":
            _parse_track(data, body, body + length, notes, tempos)
        elif not chunk_id.isascii():
            raise MidiParseError("invalid chunk identifier", pos)
        pos = body + length
    tempo = min(tempos)[1] if tempos else DEFAULT_TEMPO_BPM
    notes.sort(key=lambda n: (n.start_tick, n.pitch))
    return MidiContent(notes, division, tempo, fmt)


def write_midi(notes, ticks_per_quarter: int = 480, tempo_bpm: float = DEFAULT_TEMPO_BPM) -> bytes:
    """Write ``(pitch, start_tick, end_tick)`` triples as a format-0 SMF."""
    if tempo_bpm <= 0:
        raise ValueError("tempo must be positive")
    events = []
    for pitch, start, end in notes:
        # note-offs sort before note-ons at the same tick
        events.append((end, 0, 0x80, pitch, 0))
        events.append((start, 1, 0x90, pitch, 96))
    events.sort()
    mpqn = int(round(60_000_000 / tempo_bpm))
    track = bytearray(b"\x00\xFF\x51\x03" + mpqn.to_bytes(3, "big"))
    last = 0
    for tick, _, status, pitch, vel in events:
        track += _write_vlq(tick - last) + bytes((status, pitch, vel))
        last = tick
    track += b"\x00\xFF\x2F\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)
