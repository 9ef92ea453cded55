"""Pluggable ASR, LLM, and TTS components.

Three uniform surfaces, each with a deterministic in-process stub (cheap,
byte-reproducible, used by tests and demos) and a remote adapter that
speaks newline-delimited JSON over HTTP to a model server:

    ASR: feed(chunk) -> optional replace-style partial; finish() -> final
    LLM: generate(context, guidance, cancel) -> async stream of text deltas
    TTS: synthesize(text, cancel) -> async stream of 16 kHz AudioChunks

In process, a delta stream ends when its generator is exhausted; on the
wire an explicit {"event": "end"} line marks it, and a stream that stops
without one is treated as truncated.  All three honor cancellation within
one item.
"""

from __future__ import annotations

import asyncio
import base64
import json
import math
import os
import re
from dataclasses import dataclass
from enum import Enum
from typing import AsyncIterator, Optional

import httpx
import numpy as np

from .audio import SAMPLE_RATE, AudioChunk, frame_energy, tone_chunks
from .cancellation import CancelToken
from .memory import ConversationContext


class BackendErrorKind(Enum):
    TIMEOUT = "timeout"
    HTTP = "http"
    DECODE = "decode"
    CANCELLED = "cancelled"


class BackendError(Exception):
    def __init__(self, kind: BackendErrorKind, detail: str = "", status: Optional[int] = None):
        self.kind = kind
        self.detail = detail
        self.status = status
        label = f"{kind.value}" + (f" {status}" if status is not None else "")
        super().__init__(f"{label}: {detail}" if detail else label)


@dataclass(frozen=True)
class RemoteAdapterConfig:
    endpoint: str
    timeout_ms: int = 5000
    max_retries: int = 0
    backoff_base_ms: int = 50
    api_key_env: str = ""

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("endpoint must be a non-empty URL")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def headers(self) -> dict[str, str]:
        h = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                h["Authorization"] = f"Bearer {key}"
        return h


# ---------------------------------------------------------------------------
# Stubs

_GUIDANCE_TAG_RX = re.compile(r"^\[([a-z_]+)\]")


def guidance_strategy(guidance: str) -> str:
    """Strategy tag from a '[tag] free text' guidance string; default standard."""
    m = _GUIDANCE_TAG_RX.match(guidance.strip())
    return m.group(1) if m else "standard"


class StubAsr:
    """Counts chunks and tracks their mean RMS energy.

    Partials replace each other every ``partial_every`` chunks; the final
    transcript is "utt:<n_chunks>:<rounded mean rms>".  Deterministic for
    identical input.
    """

    def __init__(self, partial_every: int = 10):
        if partial_every < 1:
            raise ValueError("partial_every must be >= 1")
        self.partial_every = partial_every
        self.reset()

    def reset(self) -> None:
        self._count = 0
        self._rms_sum = 0.0

    def _text(self) -> str:
        mean = self._rms_sum / self._count if self._count else 0.0
        return f"utt:{self._count}:{int(round(mean))}"

    def feed(self, chunk: AudioChunk) -> Optional[str]:
        self._count += 1
        self._rms_sum += frame_energy(chunk)
        if self._count % self.partial_every == 0:
            return self._text()
        return None

    async def finish(self) -> str:
        text = self._text()
        self.reset()
        return text


class StubLlm:
    """Emits "[<strategy>] reply to: <last user text>" in 4-char deltas.

    ``delta_delay_ms`` spaces the deltas out to simulate a slow model; the
    cancel token is checked before every delta.
    """

    DELTA_CHARS = 4

    def __init__(self, delta_delay_ms: int = 0):
        self.delta_delay_ms = delta_delay_ms

    async def generate(
        self, context: ConversationContext, guidance: str, cancel: CancelToken
    ) -> AsyncIterator[str]:
        text = f"[{guidance_strategy(guidance)}] reply to: {context.last_user_text()}"
        for i in range(0, len(text), self.DELTA_CHARS):
            if cancel.cancelled:
                return
            if self.delta_delay_ms:
                await asyncio.sleep(self.delta_delay_ms / 1000.0)
                if cancel.cancelled:
                    return
            yield text[i : i + self.DELTA_CHARS]


class StubTts:
    """One 440 Hz tone chunk (20 ms, amplitude 8000) per 4 characters of
    text, phase-continuous across chunks.

    ``fixed_chunks`` pins the chunk count regardless of text length (used
    to stage long playbacks in tests); ``chunk_delay_ms`` spaces emission.
    """

    def __init__(
        self,
        freq_hz: float = 440.0,
        amplitude: int = 8000,
        chunk_ms: int = 20,
        fixed_chunks: Optional[int] = None,
        chunk_delay_ms: int = 0,
    ):
        self.freq_hz = freq_hz
        self.amplitude = amplitude
        self.chunk_ms = chunk_ms
        self.fixed_chunks = fixed_chunks
        self.chunk_delay_ms = chunk_delay_ms

    def chunk_count(self, text: str) -> int:
        if self.fixed_chunks is not None:
            return self.fixed_chunks
        return math.ceil(len(text) / 4)

    async def synthesize(self, text: str, cancel: CancelToken) -> AsyncIterator[AudioChunk]:
        n = self.chunk_count(text)
        chunk_samples = self.chunk_ms * SAMPLE_RATE // 1000
        for i in range(n):
            if cancel.cancelled:
                return
            if self.chunk_delay_ms:
                await asyncio.sleep(self.chunk_delay_ms / 1000.0)
                if cancel.cancelled:
                    return
            (chunk,) = tone_chunks(
                self.freq_hz,
                self.amplitude,
                self.chunk_ms,
                chunk_ms=self.chunk_ms,
                start_sample=i * chunk_samples,
            )
            yield AudioChunk(samples=chunk.samples, seq=i, t_start_ms=i * self.chunk_ms)


# ---------------------------------------------------------------------------
# Remote adapters (NDJSON event stream over HTTP)


async def remote_events(
    config: RemoteAdapterConfig,
    payload: dict,
    cancel: CancelToken,
    client: Optional[httpx.AsyncClient] = None,
) -> AsyncIterator[dict]:
    """POST ``payload`` and yield one parsed JSON object per response line.

    Timeouts and 5xx responses are retried up to max_retries with
    exponential backoff (backoff_base_ms * 2^attempt), but never once an
    event has already been yielded and never after cancellation.
    """
    owns_client = client is None
    if owns_client:
        client = httpx.AsyncClient(timeout=config.timeout_ms / 1000.0)
    try:
        attempt = 0
        while True:
            if cancel.cancelled:
                raise BackendError(BackendErrorKind.CANCELLED, "cancelled before request")
            yielded = False
            try:
                async with client.stream(
                    "POST", config.endpoint, json=payload, headers=config.headers()
                ) as resp:
                    if resp.status_code >= 500:
                        raise _Retryable(BackendError(
                            BackendErrorKind.HTTP, "server error", status=resp.status_code))
                    if resp.status_code >= 400:
                        raise BackendError(
                            BackendErrorKind.HTTP, "client error", status=resp.status_code)
                    async for line in resp.aiter_lines():
                        if cancel.cancelled:
                            raise BackendError(BackendErrorKind.CANCELLED, "cancelled mid-stream")
                        if not line.strip():
                            continue
                        try:
                            event = json.loads(line)
                        except json.JSONDecodeError as e:
                            raise BackendError(BackendErrorKind.DECODE, f"bad line: {e}") from None
                        yielded = True
                        yield event
                return
            except httpx.TimeoutException as e:
                err = BackendError(BackendErrorKind.TIMEOUT, str(e))
                if yielded or cancel.cancelled or attempt >= config.max_retries:
                    raise err from None
            except _Retryable as r:
                err = r.error
                if yielded or cancel.cancelled or attempt >= config.max_retries:
                    raise err from None
            except httpx.HTTPError as e:
                raise BackendError(BackendErrorKind.HTTP, str(e)) from None
            await asyncio.sleep(config.backoff_base_ms * (2 ** attempt) / 1000.0)
            attempt += 1
    finally:
        if owns_client:
            await client.aclose()


class _Retryable(Exception):
    def __init__(self, error: BackendError):
        self.error = error


class RemoteLlm:
    """Delta stream from {"event":"delta","text":...} lines, closed by an
    {"event":"end"} line; a stream that stops early is a decode error."""

    def __init__(self, config: RemoteAdapterConfig, client: Optional[httpx.AsyncClient] = None):
        self.config = config
        self._client = client

    async def generate(
        self, context: ConversationContext, guidance: str, cancel: CancelToken
    ) -> AsyncIterator[str]:
        payload = {"context": context.serialized(), "guidance": guidance}
        ended = False
        async for event in remote_events(self.config, payload, cancel, self._client):
            kind = event.get("event")
            if kind == "delta":
                if "text" not in event:
                    raise BackendError(BackendErrorKind.DECODE, "delta without text")
                yield event["text"]
            elif kind == "end":
                ended = True
                break
            else:
                raise BackendError(BackendErrorKind.DECODE, f"unknown event {kind!r}")
        if not ended and not cancel.cancelled:
            raise BackendError(BackendErrorKind.DECODE, "stream ended without end event")


class RemoteTts:
    """Audio chunks from {"event":"chunk","pcm":"<base64 s16le>"} lines."""

    def __init__(self, config: RemoteAdapterConfig, client: Optional[httpx.AsyncClient] = None):
        self.config = config
        self._client = client

    async def synthesize(self, text: str, cancel: CancelToken) -> AsyncIterator[AudioChunk]:
        seq = 0
        t_ms = 0
        ended = False
        async for event in remote_events(self.config, {"text": text}, cancel, self._client):
            kind = event.get("event")
            if kind == "chunk":
                try:
                    raw = base64.b64decode(event["pcm"], validate=True)
                except (KeyError, ValueError) as e:
                    raise BackendError(BackendErrorKind.DECODE, f"bad pcm: {e}") from None
                if len(raw) % 2:
                    raise BackendError(BackendErrorKind.DECODE, "odd pcm byte length")
                samples = np.frombuffer(raw, dtype="<i2").astype(np.int16)
                chunk = AudioChunk(samples=samples, seq=seq, t_start_ms=t_ms)
                seq += 1
                t_ms += chunk.duration_ms
                yield chunk
            elif kind == "end":
                ended = True
                break
            else:
                raise BackendError(BackendErrorKind.DECODE, f"unknown event {kind!r}")
        if not ended and not cancel.cancelled:
            raise BackendError(BackendErrorKind.DECODE, "stream ended without end event")


class RemoteAsr:
    """Buffers the utterance locally, then sends it whole at finish().

    feed() never emits live partials (the HTTP exchange happens only at
    utterance end); the final text is the remote's last transcript event.
    """

    def __init__(self, config: RemoteAdapterConfig, client: Optional[httpx.AsyncClient] = None):
        self.config = config
        self._client = client
        self._buffers: list[bytes] = []

    def reset(self) -> None:
        self._buffers = []

    def feed(self, chunk: AudioChunk) -> Optional[str]:
        self._buffers.append(chunk.samples.astype("<i2").tobytes())
        return None

    async def finish(self) -> str:
        pcm = b"".join(self._buffers)
        self.reset()
        payload = {
            "audio": base64.b64encode(pcm).decode("ascii"),
            "sample_rate": SAMPLE_RATE,
        }
        text = ""
        saw_final = False
        cancel = CancelToken()
        async for event in remote_events(self.config, payload, cancel, self._client):
            kind = event.get("event")
            if kind in ("partial", "final"):
                text = event.get("text", "")
                if kind == "final":
                    saw_final = True
            elif kind == "end":
                break
            else:
                raise BackendError(BackendErrorKind.DECODE, f"unknown event {kind!r}")
        if not saw_final:
            raise BackendError(BackendErrorKind.DECODE, "no final transcript")
        return text


@dataclass
class BackendSet:
    """The three components a session runs against."""

    asr: object
    llm: object
    tts: object


def stub_backends(
    llm_delay_ms: int = 0,
    tts_fixed_chunks: Optional[int] = None,
    asr_partial_every: int = 10,
) -> BackendSet:
    return BackendSet(
        asr=StubAsr(partial_every=asr_partial_every),
        llm=StubLlm(delta_delay_ms=llm_delay_ms),
        tts=StubTts(fixed_chunks=tts_fixed_chunks),
    )
