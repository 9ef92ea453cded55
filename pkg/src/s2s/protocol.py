"""Wire protocol for the duplex conversation socket.

Control messages travel as UTF-8 JSON text frames carrying exactly the
fields ``{type, seq, ts_ms, payload}``.  Audio travels as binary frames:

    1 byte   channel   0x01 = client microphone, 0x02 = server TTS
    4 bytes  seq       unsigned, big-endian (network byte order)
    n bytes  samples   PCM16 little-endian, mono, 16 kHz; n even and > 0

Control tags, client to server:
    session.start     {sample_rate, encoding, user_id, locale}
    text.input        {text}
    interrupt.manual  {}
    session.end       {}

Control tags, server to client:
    state             {state: listening|processing|speaking|blocked}
    asr.partial       {text}
    asr.final         {text}
    llm.delta         {text}
    action            {strategy: interrupt|refuse|deflect|no_response|standard, guidance}
    interrupt.ack     {source: voice|text|agent}
    blocked           {until_ms: <ms since epoch> | "permanent"}
    error             {code, detail}

Unknown control tags are hard decode errors: protocol drift should fail
loudly, not be silently ignored.  Decoding never raises anything other
than DecodeError, no matter what bytes arrive.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Mapping

STATES = ("listening", "processing", "speaking", "blocked")
STRATEGIES = ("interrupt", "refuse", "deflect", "no_response", "standard")
INTERRUPT_SOURCES = ("voice", "text", "agent")

CLIENT_TYPES = ("session.start", "text.input", "interrupt.manual", "session.end")
SERVER_TYPES = (
    "state",
    "asr.partial",
    "asr.final",
    "llm.delta",
    "action",
    "interrupt.ack",
    "blocked",
    "error",
)

SUPPORTED_SAMPLE_RATE = 16000
SUPPORTED_ENCODING = "pcm16le"

_AUDIO_HEADER = struct.Struct(">BI")
MIN_AUDIO_FRAME_BYTES = _AUDIO_HEADER.size + 2
MAX_FRAME_SEQ = 0xFFFFFFFF


class ProtocolError(Exception):
    """Base class for wire protocol failures."""


class EncodeError(ProtocolError):
    """A value violates the wire schema; ``field_path`` names the offender."""

    def __init__(self, field_path: str, detail: str):
        super().__init__(f"{field_path}: {detail}")
        self.field_path = field_path
        self.detail = detail


class DecodeError(ProtocolError):
    """Incoming bytes could not be decoded.  ``reason`` is one of the
    REASON_* constants below."""

    NOT_UTF8 = "not_utf8"
    BAD_JSON = "bad_json"
    UNKNOWN_TYPE = "unknown_type"
    MISSING_FIELD = "missing_field"
    TOO_SHORT = "too_short"
    ODD_PAYLOAD = "odd_payload"
    BAD_CHANNEL = "bad_channel"

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class HandshakeError(ProtocolError):
    UNSUPPORTED_RATE = "unsupported_rate"
    UNSUPPORTED_ENCODING = "unsupported_encoding"
    BAD_MESSAGE = "bad_message"

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class AudioChannel(IntEnum):
    CLIENT_MIC = 0x01
    SERVER_TTS = 0x02


@dataclass(frozen=True)
class ControlMessage:
    type: str
    seq: int
    ts_ms: int
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AudioFrame:
    channel: AudioChannel
    seq: int
    samples: tuple  # int16 values


@dataclass(frozen=True)
class SessionConfig:
    """Negotiated session parameters returned by a successful handshake."""

    sample_rate: int
    encoding: str
    user_id: str
    locale: str
    chunk_ms: int = 20


def _is_str(v: Any) -> bool:
    return isinstance(v, str)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _one_of(options):
    return lambda v: isinstance(v, str) and v in options


def _is_until(v: Any) -> bool:
    # Absolute expiry in ms, or the literal string "permanent".
    return v == "permanent" or (_is_int(v) and v >= 0)


_PAYLOAD_SCHEMAS: dict[str, dict[str, Any]] = {
    "session.start": {
        "sample_rate": _is_int,
        "encoding": _is_str,
        "user_id": _is_str,
        "locale": _is_str,
    },
    "text.input": {"text": _is_str},
    "interrupt.manual": {},
    "session.end": {},
    "state": {"state": _one_of(STATES)},
    "asr.partial": {"text": _is_str},
    "asr.final": {"text": _is_str},
    "llm.delta": {"text": _is_str},
    "action": {"strategy": _one_of(STRATEGIES), "guidance": _is_str},
    "interrupt.ack": {"source": _one_of(INTERRUPT_SOURCES)},
    "blocked": {"until_ms": _is_until},
    "error": {"code": _is_str, "detail": _is_str},
}

KNOWN_TYPES = frozenset(_PAYLOAD_SCHEMAS)


def encode_control(msg: ControlMessage) -> bytes:
    """Serialize a control message to compact UTF-8 JSON bytes.

    Raises EncodeError naming the offending field when the message does
    not match the closed schema for its type.
    """
    if msg.type not in _PAYLOAD_SCHEMAS:
        raise EncodeError("type", f"unknown control type {msg.type!r}")
    if not _is_int(msg.seq) or msg.seq < 0:
        raise EncodeError("seq", "must be a non-negative integer")
    if not _is_int(msg.ts_ms) or msg.ts_ms < 0:
        raise EncodeError("ts_ms", "must be a non-negative integer")
    if not isinstance(msg.payload, Mapping):
        raise EncodeError("payload", "must be an object")
    schema = _PAYLOAD_SCHEMAS[msg.type]
    for name, check in schema.items():
        if name not in msg.payload:
            raise EncodeError(f"payload.{name}", "missing required field")
        if not check(msg.payload[name]):
            raise EncodeError(f"payload.{name}", "invalid value")
    for name in msg.payload:
        if name not in schema:
            raise EncodeError(f"payload.{name}", f"unexpected field for {msg.type!r}")
    doc = {"type": msg.type, "seq": msg.seq, "ts_ms": msg.ts_ms, "payload": dict(msg.payload)}
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode_control(data: bytes | str) -> ControlMessage:
    """Inverse of encode_control on its image; total over arbitrary bytes."""
    if isinstance(data, (bytes, bytearray, memoryview)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(DecodeError.NOT_UTF8, str(exc)) from None
    else:
        text = data
    try:
        doc = json.loads(text)
    except Exception as exc:
        raise DecodeError(DecodeError.BAD_JSON, str(exc)) from None
    if not isinstance(doc, dict):
        raise DecodeError(DecodeError.BAD_JSON, "top-level value is not an object")

    if "type" not in doc or not _is_str(doc["type"]):
        raise DecodeError(DecodeError.MISSING_FIELD, "type")
    mtype = doc["type"]
    if mtype not in _PAYLOAD_SCHEMAS:
        raise DecodeError(DecodeError.UNKNOWN_TYPE, mtype)
    for name, check in (("seq", _is_int), ("ts_ms", _is_int)):
        if name not in doc or not check(doc[name]) or doc[name] < 0:
            raise DecodeError(DecodeError.MISSING_FIELD, name)
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise DecodeError(DecodeError.MISSING_FIELD, "payload")
    for name, check in _PAYLOAD_SCHEMAS[mtype].items():
        if name not in payload or not check(payload[name]):
            raise DecodeError(DecodeError.MISSING_FIELD, f"payload.{name}")
    return ControlMessage(type=mtype, seq=doc["seq"], ts_ms=doc["ts_ms"], payload=payload)


def encode_audio(frame: AudioFrame) -> bytes:
    """Pack an audio frame: channel byte, big-endian seq, PCM16LE samples."""
    if len(frame.samples) == 0:
        raise EncodeError("samples", "audio frame must carry at least one sample")
    if frame.channel not in (AudioChannel.CLIENT_MIC, AudioChannel.SERVER_TTS):
        raise EncodeError("channel", f"bad channel {frame.channel!r}")
    if not _is_int(frame.seq) or not 0 <= frame.seq <= MAX_FRAME_SEQ:
        raise EncodeError("seq", "must fit in an unsigned 32-bit integer")
    try:
        pcm = struct.pack(f"<{len(frame.samples)}h", *frame.samples)
    except struct.error:
        raise EncodeError("samples", "values must fit in signed 16-bit range") from None
    return _AUDIO_HEADER.pack(int(frame.channel), frame.seq) + pcm


def decode_audio(data: bytes) -> AudioFrame:
    """Inverse of encode_audio; rejects short, odd, or mis-channelled frames."""
    raw = bytes(data)
    if len(raw) < MIN_AUDIO_FRAME_BYTES:
        raise DecodeError(DecodeError.TOO_SHORT, f"{len(raw)} bytes")
    channel_byte, seq = _AUDIO_HEADER.unpack_from(raw)
    if channel_byte not in (0x01, 0x02):
        raise DecodeError(DecodeError.BAD_CHANNEL, f"0x{channel_byte:02x}")
    pcm = raw[_AUDIO_HEADER.size:]
    if len(pcm) % 2 != 0:
        raise DecodeError(DecodeError.ODD_PAYLOAD, f"{len(pcm)} pcm bytes")
    samples = struct.unpack(f"<{len(pcm) // 2}h", pcm)
    return AudioFrame(channel=AudioChannel(channel_byte), seq=seq, samples=samples)


def validate_handshake(msg: ControlMessage, chunk_ms: int = 20) -> SessionConfig:
    """Check a session.start message and derive the session configuration.

    Only 16 kHz PCM16LE input is accepted; anything else is a handshake
    error rather than a silent renegotiation.
    """
    if msg.type != "session.start":
        raise HandshakeError(HandshakeError.BAD_MESSAGE, f"expected session.start, got {msg.type!r}")
    rate = msg.payload["sample_rate"]
    if rate != SUPPORTED_SAMPLE_RATE:
        raise HandshakeError(HandshakeError.UNSUPPORTED_RATE, f"{rate} Hz")
    encoding = msg.payload["encoding"]
    if encoding != SUPPORTED_ENCODING:
        raise HandshakeError(HandshakeError.UNSUPPORTED_ENCODING, encoding)
    return SessionConfig(
        sample_rate=rate,
        encoding=encoding,
        user_id=msg.payload["user_id"],
        locale=msg.payload["locale"],
        chunk_ms=chunk_ms,
    )
