"""Audio chunk management: frame energy, energy VAD with hangover, and
purgeable buffered frame queues.

The VAD is deliberately simple: RMS thresholding with two dwell times.
A speech run must persist for ``min_speech_ms`` before SpeechStart fires,
and silence must persist for ``min_silence_ms`` (the hangover) before
SpeechEnd fires, so short plosives and breath pauses do not flip the mode.
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional

import numpy as np

SAMPLE_RATE = 16000


class VadEvent(Enum):
    SPEECH_START = "speech_start"
    SPEECH_END = "speech_end"


class VadMode(Enum):
    SILENCE = "silence"
    SPEECH = "speech"


@dataclass(frozen=True)
class VadConfig:
    energy_threshold: float = 500.0  # RMS units on int16 samples
    min_speech_ms: int = 100
    min_silence_ms: int = 500
    chunk_ms: int = 20

    @property
    def chunk_samples(self) -> int:
        return self.chunk_ms * SAMPLE_RATE // 1000


@dataclass(frozen=True)
class AudioChunk:
    """One fixed-duration PCM16 frame; the unit of all streaming."""

    samples: np.ndarray
    seq: int = 0
    t_start_ms: int = 0
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"sample_rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        if len(self.samples) == 0 or len(self.samples) % (SAMPLE_RATE // 1000) != 0:
            raise ValueError(f"chunk length {len(self.samples)} is not a whole number of ms")

    @property
    def duration_ms(self) -> int:
        return len(self.samples) * 1000 // SAMPLE_RATE

    @classmethod
    def from_samples(cls, samples: Iterable[int], seq: int = 0, t_start_ms: int = 0) -> "AudioChunk":
        arr = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=np.int16)
        return cls(samples=arr, seq=seq, t_start_ms=t_start_ms)


def frame_energy(chunk: AudioChunk) -> float:
    """RMS of the chunk: sqrt(mean(s_i^2)) over its samples."""
    s = chunk.samples.astype(np.float64)
    return float(math.sqrt(float(np.mean(s * s))))


@dataclass(frozen=True)
class VadState:
    """Immutable VAD state; step with vad_step."""

    config: VadConfig
    mode: VadMode = VadMode.SILENCE
    active_ms: int = 0  # how long the current mode has persisted
    run_ms: int = 0  # consecutive contrary evidence (speech while silent, or vice versa)

    @classmethod
    def initial(cls, config: Optional[VadConfig] = None) -> "VadState":
        return cls(config=config or VadConfig())


def vad_step(state: VadState, chunk: AudioChunk) -> tuple[VadState, Optional[VadEvent]]:
    """Advance the VAD by one chunk; returns the new state and an event
    when the mode flips.

    SpeechStart fires on the chunk that completes min_speech_ms of
    consecutive at-or-above-threshold energy; SpeechEnd on the chunk that
    completes min_silence_ms of consecutive below-threshold energy.
    active_ms resets to 0 on the flip, otherwise grows by the chunk
    duration.
    """
    cfg = state.config
    step_ms = chunk.duration_ms
    loud = frame_energy(chunk) >= cfg.energy_threshold

    if state.mode is VadMode.SILENCE:
        run = state.run_ms + step_ms if loud else 0
        if loud and run >= cfg.min_speech_ms:
            return replace(state, mode=VadMode.SPEECH, active_ms=0, run_ms=0), VadEvent.SPEECH_START
        return replace(state, active_ms=state.active_ms + step_ms, run_ms=run), None

    run = state.run_ms + step_ms if not loud else 0
    if not loud and run >= cfg.min_silence_ms:
        return replace(state, mode=VadMode.SILENCE, active_ms=0, run_ms=0), VadEvent.SPEECH_END
    return replace(state, active_ms=state.active_ms + step_ms, run_ms=run), None


class PurgeableQueue:
    """Ordered frame buffer shared between a producer, a consumer, and a
    control context that may purge it at any time.

    append/pop/purge are linearizable (single lock).  Appending past the
    byte bound evicts the oldest frames, which is the right backpressure
    for a playback buffer: stale audio is worth less than fresh audio.
    """

    def __init__(self, max_bytes: int = 2 * 1024 * 1024):
        if max_bytes <= 0:
            raise ValueError("max_bytes must be positive")
        self._lock = threading.Lock()
        self._frames: deque = deque()
        self._bytes = 0
        self._max_bytes = max_bytes
        self._purged_total = 0
        self._overflow_dropped = 0

    @staticmethod
    def _frame_bytes(frame) -> int:
        return 2 * len(frame.samples)

    def append(self, frame) -> None:
        size = self._frame_bytes(frame)
        with self._lock:
            while self._frames and self._bytes + size > self._max_bytes:
                old = self._frames.popleft()
                self._bytes -= self._frame_bytes(old)
                self._overflow_dropped += 1
            self._frames.append(frame)
            self._bytes += size

    def pop(self):
        """Remove and return the oldest frame, or None when empty."""
        with self._lock:
            if not self._frames:
                return None
            frame = self._frames.popleft()
            self._bytes -= self._frame_bytes(frame)
            return frame

    def purge(self) -> int:
        """Drop every buffered frame; returns how many were dropped.

        Frames already handed to the transport are not recalled.
        """
        with self._lock:
            dropped = len(self._frames)
            self._frames.clear()
            self._bytes = 0
            self._purged_total += dropped
            return dropped

    def __len__(self) -> int:
        with self._lock:
            return len(self._frames)

    @property
    def bytes_buffered(self) -> int:
        with self._lock:
            return self._bytes

    @property
    def purged_total(self) -> int:
        with self._lock:
            return self._purged_total

    @property
    def overflow_dropped(self) -> int:
        with self._lock:
            return self._overflow_dropped


def tone_chunks(
    freq_hz: float,
    amplitude: int,
    duration_ms: int,
    chunk_ms: int = 20,
    start_sample: int = 0,
) -> list[AudioChunk]:
    """Synthesize a sine tone as a list of chunks (test and demo signal)."""
    chunk_samples = chunk_ms * SAMPLE_RATE // 1000
    total = duration_ms * SAMPLE_RATE // 1000
    n = np.arange(start_sample, start_sample + total, dtype=np.float64)
    wave = np.rint(amplitude * np.sin(2.0 * math.pi * freq_hz * n / SAMPLE_RATE))
    wave = np.clip(wave, -32768, 32767).astype(np.int16)
    return [
        AudioChunk(samples=wave[i : i + chunk_samples])
        for i in range(0, total - chunk_samples + 1, chunk_samples)
    ]


def silence_chunks(duration_ms: int, chunk_ms: int = 20) -> list[AudioChunk]:
    chunk_samples = chunk_ms * SAMPLE_RATE // 1000
    count = duration_ms // chunk_ms
    return [AudioChunk(samples=np.zeros(chunk_samples, dtype=np.int16)) for _ in range(count)]
