"""One declarative TOML file configures everything.

Sections: [server], [vad], [pipeline], [backends.asr], [backends.llm],
[backends.tts], [judgement], [memory], [sft].  Parsing is strict: an
unknown or ill-typed key fails with its full dotted path, so a typo can
never silently fall back to a default.  API keys never appear in the
file, only environment variable names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import tomli

from .audio import VadConfig
from .backends import (
    BackendSet,
    RemoteAdapterConfig,
    RemoteAsr,
    RemoteLlm,
    RemoteTts,
    StubAsr,
    StubLlm,
    StubTts,
    remote_events,
)
from .cancellation import CancelToken
from .judgement import (
    DEFAULT_TEMPLATES,
    AccessControlList,
    LlmJudge,
    MonitorConfig,
    RuleJudge,
    load_lexicon,
)


class ConfigError(Exception):
    def __init__(self, key_path: str, detail: str):
        self.key_path = key_path
        self.detail = detail
        super().__init__(f"{key_path}: {detail}")


@dataclass(frozen=True)
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765


@dataclass(frozen=True)
class PipelineConfig:
    preemption_check_items: int = 1
    max_queue_bytes: int = 2 * 1024 * 1024
    trace_path: Optional[str] = None


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "stub"
    endpoint: str = ""
    timeout_ms: int = 5000
    max_retries: int = 0
    backoff_base_ms: int = 50
    api_key_env: str = ""
    # stub knobs
    partial_every: int = 10        # asr
    delta_delay_ms: int = 0        # llm
    freq_hz: float = 440.0         # tts
    amplitude: int = 8000          # tts
    fixed_chunks: Optional[int] = None  # tts
    chunk_delay_ms: int = 0        # tts


@dataclass(frozen=True)
class JudgementConfig:
    kind: str = "rule"
    confidence_threshold: float = 0.8
    cadence_ms: int = 500
    cadence_chars: int = 24
    min_chars: int = 12
    deadline_ms: int = 400
    templates: dict = field(default_factory=dict)
    lexicon_path: Optional[str] = None
    acl_path: Optional[str] = None
    block_duration_ms: Union[int, str] = 60_000
    repeat_window_ms: int = 120_000
    endpoint: str = ""
    timeout_ms: int = 5000


@dataclass(frozen=True)
class MemoryConfig:
    persist_path: Optional[str] = None
    recent_turns: int = 6
    salient_top_k: int = 5
    budget_chars: int = 2000


@dataclass(frozen=True)
class SftConfig:
    tau_ms: int = 700
    neg_ratio: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class AppConfig:
    server: ServerConfig = field(default_factory=ServerConfig)
    vad: VadConfig = field(default_factory=VadConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    asr: BackendConfig = field(default_factory=BackendConfig)
    llm: BackendConfig = field(default_factory=BackendConfig)
    tts: BackendConfig = field(default_factory=BackendConfig)
    judgement: JudgementConfig = field(default_factory=JudgementConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    sft: SftConfig = field(default_factory=SftConfig)


# ---------------------------------------------------------------------------
# Parsing

def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _take_int(v, path, minimum=None):
    if not _is_int(v):
        raise ConfigError(path, f"expected integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v}")
    return v


def _take_float(v, path, minimum=None, maximum=None):
    if not (_is_int(v) or isinstance(v, float)):
        raise ConfigError(path, f"expected number, got {type(v).__name__}")
    v = float(v)
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(path, f"must be <= {maximum}, got {v}")
    return v


def _take_str(v, path, choices=None):
    if not isinstance(v, str):
        raise ConfigError(path, f"expected string, got {type(v).__name__}")
    if choices is not None and v not in choices:
        raise ConfigError(path, f"expected one of {sorted(choices)}, got {v!r}")
    return v


def _take_duration(v, path):
    """Positive milliseconds or the string "permanent"."""
    if isinstance(v, str):
        if v != "permanent":
            raise ConfigError(path, f'expected ms or "permanent", got {v!r}')
        return v
    return _take_int(v, path, minimum=1)


def _subtable(doc: dict, name: str) -> dict:
    v = doc.get(name, {})
    if not isinstance(v, dict):
        raise ConfigError(name, f"expected a table, got {type(v).__name__}")
    return v


def _reject_unknown(table: dict, prefix: str, allowed: set[str]) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}" if prefix else key, "unknown key")


def _parse_server(t: dict) -> ServerConfig:
    _reject_unknown(t, "server", {"host", "port"})
    out = ServerConfig(
        host=_take_str(t["host"], "server.host") if "host" in t else ServerConfig.host,
        # port 0 asks the OS for an ephemeral port
        port=_take_int(t["port"], "server.port", minimum=0) if "port" in t else ServerConfig.port,
    )
    if out.port > 65535:
        raise ConfigError("server.port", f"must be <= 65535, got {out.port}")
    return out


def _parse_vad(t: dict) -> VadConfig:
    _reject_unknown(t, "vad", {"energy_threshold", "min_speech_ms", "min_silence_ms", "chunk_ms"})
    kwargs = {}
    if "energy_threshold" in t:
        kwargs["energy_threshold"] = _take_float(t["energy_threshold"], "vad.energy_threshold", minimum=0.0)
    for key in ("min_speech_ms", "min_silence_ms", "chunk_ms"):
        if key in t:
            kwargs[key] = _take_int(t[key], f"vad.{key}", minimum=1)
    try:
        return VadConfig(**kwargs)
    except ValueError as e:
        raise ConfigError("vad", str(e)) from None


def _parse_pipeline(t: dict) -> PipelineConfig:
    _reject_unknown(t, "pipeline", {"preemption_check_items", "max_queue_bytes", "trace_path"})
    return PipelineConfig(
        preemption_check_items=_take_int(t["preemption_check_items"], "pipeline.preemption_check_items", minimum=1)
        if "preemption_check_items" in t else 1,
        max_queue_bytes=_take_int(t["max_queue_bytes"], "pipeline.max_queue_bytes", minimum=1)
        if "max_queue_bytes" in t else PipelineConfig.max_queue_bytes,
        trace_path=_take_str(t["trace_path"], "pipeline.trace_path") if "trace_path" in t else None,
    )


_REMOTE_KEYS = {"endpoint", "timeout_ms", "max_retries", "backoff_base_ms", "api_key_env"}
_BACKEND_EXTRA = {
    "asr": {"partial_every"},
    "llm": {"delta_delay_ms"},
    "tts": {"freq_hz", "amplitude", "fixed_chunks", "chunk_delay_ms"},
}


def _parse_backend(t: dict, role: str) -> BackendConfig:
    prefix = f"backends.{role}"
    _reject_unknown(t, prefix, {"kind"} | _REMOTE_KEYS | _BACKEND_EXTRA[role])
    kind = _take_str(t.get("kind", "stub"), f"{prefix}.kind", choices={"stub", "remote"})
    if kind == "remote" and not t.get("endpoint"):
        raise ConfigError(f"{prefix}.endpoint", "required for remote backends")
    kwargs: dict[str, Any] = {"kind": kind}
    if "endpoint" in t:
        kwargs["endpoint"] = _take_str(t["endpoint"], f"{prefix}.endpoint")
    if "timeout_ms" in t:
        kwargs["timeout_ms"] = _take_int(t["timeout_ms"], f"{prefix}.timeout_ms", minimum=1)
    if "max_retries" in t:
        kwargs["max_retries"] = _take_int(t["max_retries"], f"{prefix}.max_retries", minimum=0)
    if "backoff_base_ms" in t:
        kwargs["backoff_base_ms"] = _take_int(t["backoff_base_ms"], f"{prefix}.backoff_base_ms", minimum=0)
    if "api_key_env" in t:
        kwargs["api_key_env"] = _take_str(t["api_key_env"], f"{prefix}.api_key_env")
    if "partial_every" in t:
        kwargs["partial_every"] = _take_int(t["partial_every"], f"{prefix}.partial_every", minimum=1)
    if "delta_delay_ms" in t:
        kwargs["delta_delay_ms"] = _take_int(t["delta_delay_ms"], f"{prefix}.delta_delay_ms", minimum=0)
    if "freq_hz" in t:
        kwargs["freq_hz"] = _take_float(t["freq_hz"], f"{prefix}.freq_hz", minimum=1.0)
    if "amplitude" in t:
        kwargs["amplitude"] = _take_int(t["amplitude"], f"{prefix}.amplitude", minimum=0)
    if "fixed_chunks" in t:
        kwargs["fixed_chunks"] = _take_int(t["fixed_chunks"], f"{prefix}.fixed_chunks", minimum=0)
    if "chunk_delay_ms" in t:
        kwargs["chunk_delay_ms"] = _take_int(t["chunk_delay_ms"], f"{prefix}.chunk_delay_ms", minimum=0)
    return BackendConfig(**kwargs)


def _parse_judgement(t: dict) -> JudgementConfig:
    allowed = {
        "kind", "confidence_threshold", "cadence_ms", "cadence_chars", "min_chars",
        "deadline_ms", "templates", "lexicon_path", "acl_path", "block_duration_ms",
        "repeat_window_ms", "endpoint", "timeout_ms",
    }
    _reject_unknown(t, "judgement", allowed)
    kwargs: dict[str, Any] = {}
    if "kind" in t:
        kwargs["kind"] = _take_str(t["kind"], "judgement.kind", choices={"rule", "remote-llm"})
    if "confidence_threshold" in t:
        kwargs["confidence_threshold"] = _take_float(
            t["confidence_threshold"], "judgement.confidence_threshold", minimum=0.0, maximum=1.0)
    for key in ("cadence_ms", "cadence_chars", "min_chars", "deadline_ms", "repeat_window_ms", "timeout_ms"):
        if key in t:
            kwargs[key] = _take_int(t[key], f"judgement.{key}", minimum=1)
    if "templates" in t:
        table = t["templates"]
        if not isinstance(table, dict):
            raise ConfigError("judgement.templates", "expected a table of locale = string")
        for loc, s in table.items():
            if not isinstance(s, str):
                raise ConfigError(f"judgement.templates.{loc}", "expected string")
        kwargs["templates"] = dict(table)
    for key in ("lexicon_path", "acl_path", "endpoint"):
        if key in t:
            kwargs[key] = _take_str(t[key], f"judgement.{key}")
    if "block_duration_ms" in t:
        kwargs["block_duration_ms"] = _take_duration(t["block_duration_ms"], "judgement.block_duration_ms")
    if kwargs.get("kind") == "remote-llm" and not kwargs.get("endpoint"):
        raise ConfigError("judgement.endpoint", "required for the remote-llm judge")
    return JudgementConfig(**kwargs)


def _parse_memory(t: dict) -> MemoryConfig:
    _reject_unknown(t, "memory", {"persist_path", "recent_turns", "salient_top_k", "budget_chars"})
    kwargs: dict[str, Any] = {}
    if "persist_path" in t:
        kwargs["persist_path"] = _take_str(t["persist_path"], "memory.persist_path")
    for key, lo in (("recent_turns", 1), ("salient_top_k", 0), ("budget_chars", 200)):
        if key in t:
            kwargs[key] = _take_int(t[key], f"memory.{key}", minimum=lo)
    return MemoryConfig(**kwargs)


def _parse_sft(t: dict) -> SftConfig:
    _reject_unknown(t, "sft", {"tau_ms", "neg_ratio", "seed"})
    kwargs: dict[str, Any] = {}
    if "tau_ms" in t:
        kwargs["tau_ms"] = _take_int(t["tau_ms"], "sft.tau_ms", minimum=1)
    if "neg_ratio" in t:
        kwargs["neg_ratio"] = _take_float(t["neg_ratio"], "sft.neg_ratio", minimum=0.0)
    if "seed" in t:
        kwargs["seed"] = _take_int(t["seed"], "sft.seed")
    return SftConfig(**kwargs)


def parse_config(doc: dict) -> AppConfig:
    top = {"server", "vad", "pipeline", "backends", "judgement", "memory", "sft"}
    _reject_unknown(doc, "", top)
    backends = _subtable(doc, "backends")
    _reject_unknown(backends, "backends", {"asr", "llm", "tts"})
    return AppConfig(
        server=_parse_server(_subtable(doc, "server")),
        vad=_parse_vad(_subtable(doc, "vad")),
        pipeline=_parse_pipeline(_subtable(doc, "pipeline")),
        asr=_parse_backend(_subtable(backends, "asr"), "asr"),
        llm=_parse_backend(_subtable(backends, "llm"), "llm"),
        tts=_parse_backend(_subtable(backends, "tts"), "tts"),
        judgement=_parse_judgement(_subtable(doc, "judgement")),
        memory=_parse_memory(_subtable(doc, "memory")),
        sft=_parse_sft(_subtable(doc, "sft")),
    )


def load_config(path: Union[str, Path]) -> AppConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e}") from None
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(str(path), f"invalid TOML: {e}") from None
    return parse_config(doc)


# ---------------------------------------------------------------------------
# Wiring

def _remote_config(b: BackendConfig) -> RemoteAdapterConfig:
    return RemoteAdapterConfig(
        endpoint=b.endpoint,
        timeout_ms=b.timeout_ms,
        max_retries=b.max_retries,
        backoff_base_ms=b.backoff_base_ms,
        api_key_env=b.api_key_env,
    )


def make_backend_set(cfg: AppConfig) -> BackendSet:
    asr = (StubAsr(partial_every=cfg.asr.partial_every) if cfg.asr.kind == "stub"
           else RemoteAsr(_remote_config(cfg.asr)))
    llm = (StubLlm(delta_delay_ms=cfg.llm.delta_delay_ms) if cfg.llm.kind == "stub"
           else RemoteLlm(_remote_config(cfg.llm)))
    tts = (StubTts(freq_hz=cfg.tts.freq_hz, amplitude=cfg.tts.amplitude,
                   fixed_chunks=cfg.tts.fixed_chunks, chunk_delay_ms=cfg.tts.chunk_delay_ms)
           if cfg.tts.kind == "stub" else RemoteTts(_remote_config(cfg.tts)))
    return BackendSet(asr=asr, llm=llm, tts=tts)


def make_judge(cfg: AppConfig, clock_ms: Optional[Callable[[], int]] = None):
    j = cfg.judgement
    if j.kind == "rule":
        lexicon = load_lexicon(j.lexicon_path) if j.lexicon_path else None
        kwargs: dict[str, Any] = {"repeat_window_ms": j.repeat_window_ms}
        if lexicon is not None:
            kwargs["lexicon"] = lexicon
        if clock_ms is not None:
            kwargs["clock_ms"] = clock_ms
        return RuleJudge(**kwargs)
    remote = RemoteAdapterConfig(endpoint=j.endpoint, timeout_ms=j.timeout_ms)

    async def complete(context, input_text, mode) -> str:
        payload = {
            "context": context.serialized(),
            "input": input_text,
            "mode": mode.value,
        }
        parts = []
        async for event in remote_events(remote, payload, CancelToken()):
            if event.get("event") == "delta":
                parts.append(event.get("text", ""))
            elif event.get("event") == "end":
                break
        return "".join(parts)

    return LlmJudge(complete)


def make_monitor_config(cfg: AppConfig) -> MonitorConfig:
    j = cfg.judgement
    return MonitorConfig(
        confidence_threshold=j.confidence_threshold,
        min_partial_chars=j.min_chars,
        cadence_ms=j.cadence_ms,
        cadence_chars=j.cadence_chars,
        deadline_ms=j.deadline_ms,
    )


def make_templates(cfg: AppConfig) -> dict[str, str]:
    table = dict(DEFAULT_TEMPLATES)
    table.update(cfg.judgement.templates)
    return table


def load_acl(cfg: AppConfig) -> AccessControlList:
    if cfg.judgement.acl_path:
        return AccessControlList.load(cfg.judgement.acl_path)
    return AccessControlList()
