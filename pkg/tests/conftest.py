"""Shared helpers for the test suite."""

import asyncio

import numpy as np

from s2s import protocol
from s2s.audio import AudioChunk

CHUNK_SAMPLES = 320  # 20 ms at 16 kHz


def dc_chunk(value, seq=0, t_start_ms=0):
    """A chunk of one constant sample value; its RMS equals abs(value)."""
    return AudioChunk.from_samples(
        np.full(CHUNK_SAMPLES, value, dtype=np.int16), seq=seq, t_start_ms=t_start_ms
    )


def mic_frame(chunk, seq):
    return protocol.AudioFrame(
        channel=protocol.AudioChannel.CLIENT_MIC,
        seq=seq,
        samples=tuple(int(s) for s in chunk.samples),
    )


def drain(session):
    """Empty the session outbox into a list, in order."""
    items = []
    while not session.outbox.empty():
        items.append(session.outbox.get_nowait())
    return items


def controls(items, mtype=None):
    out = [m for m in items if isinstance(m, protocol.ControlMessage)]
    if mtype is not None:
        out = [m for m in out if m.type == mtype]
    return out


def audio_frames(items):
    return [m for m in items if isinstance(m, protocol.AudioFrame)]


def run(coro):
    return asyncio.run(coro)
