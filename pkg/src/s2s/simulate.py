"""Scripted conversations against an in-process session.

A script is newline-delimited JSON events: synthesized audio (tone or
silence specs, so no assets are needed), typed text, manual interrupts,
and expectations about the state or the judged strategy.  The runner
drives a real session in real time, evaluates every expectation, and
reports latency percentiles for the two transitions that matter:
interrupt -> listening and speech-end -> response-ready.
"""

from __future__ import annotations

import asyncio
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from . import protocol
from .audio import silence_chunks, tone_chunks
from .backends import StubLlm, StubTts, stub_backends
from .config import (
    AppConfig,
    make_backend_set,
    make_judge,
    make_monitor_config,
    make_templates,
)
from .judgement import RuleJudge
from .pipeline import EventKind, PipelineState, Session

EVENT_KINDS = ("send_audio", "send_text", "manual_interrupt", "expect_state", "expect_action")


class ScriptError(Exception):
    pass


@dataclass(frozen=True)
class ScriptEvent:
    kind: str
    at_ms: int = 0
    duration_ms: int = 0
    freq_hz: Optional[float] = None
    amplitude: int = 8000
    text: str = ""
    state: str = ""
    strategy: str = ""
    within_ms: int = 1000


def parse_script(text: str) -> list[ScriptEvent]:
    events = []
    last_at = 0
    for ln, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ScriptError(f"line {ln}: invalid JSON: {e}") from None
        kind = doc.get("kind")
        if kind not in EVENT_KINDS:
            raise ScriptError(f"line {ln}: unknown kind {kind!r}")
        at_ms = doc.get("at_ms", last_at)
        if not isinstance(at_ms, int) or at_ms < last_at:
            raise ScriptError(f"line {ln}: at_ms must be a non-decreasing integer")
        last_at = at_ms
        if kind == "expect_state" and doc.get("state") not in protocol.STATES:
            raise ScriptError(f"line {ln}: bad state {doc.get('state')!r}")
        if kind == "expect_action" and doc.get("strategy") not in protocol.STRATEGIES:
            raise ScriptError(f"line {ln}: bad strategy {doc.get('strategy')!r}")
        events.append(ScriptEvent(
            kind=kind,
            at_ms=at_ms,
            duration_ms=int(doc.get("duration_ms", 0)),
            freq_hz=doc.get("freq_hz"),
            amplitude=int(doc.get("amplitude", 8000)),
            text=doc.get("text", ""),
            state=doc.get("state", ""),
            strategy=doc.get("strategy", ""),
            within_ms=int(doc.get("within_ms", 1000)),
        ))
    if not events:
        raise ScriptError("empty script")
    return events


def load_script(path: Union[str, Path]) -> list[ScriptEvent]:
    return parse_script(Path(path).read_text(encoding="utf-8"))


@dataclass
class ExpectationResult:
    description: str
    passed: bool
    detail: str = ""
    elapsed_ms: Optional[float] = None

    def render(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        timing = f" ({self.elapsed_ms:.1f} ms)" if self.elapsed_ms is not None else ""
        detail = f" - {self.detail}" if self.detail else ""
        return f"{mark} {self.description}{timing}{detail}"


def percentile(values: Sequence[float], q: float) -> Optional[float]:
    """Nearest-rank percentile; None for an empty sample."""
    if not values:
        return None
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass
class RunReport:
    expectations: list[ExpectationResult] = field(default_factory=list)
    interrupt_latencies_ms: list[float] = field(default_factory=list)
    response_latencies_ms: list[float] = field(default_factory=list)
    trace_path: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.expectations)

    def latency_summary(self) -> dict:
        def stats(vals):
            return {
                "count": len(vals),
                "p50": percentile(vals, 50),
                "p90": percentile(vals, 90),
                "p99": percentile(vals, 99),
            }
        return {
            "interrupt_to_listening": stats(self.interrupt_latencies_ms),
            "speech_end_to_response": stats(self.response_latencies_ms),
        }

    def render(self) -> str:
        lines = [e.render() for e in self.expectations]
        for name, s in self.latency_summary().items():
            if s["count"]:
                lines.append(
                    f"{name}: n={s['count']} p50={s['p50']:.2f}ms "
                    f"p90={s['p90']:.2f}ms p99={s['p99']:.2f}ms")
            else:
                lines.append(f"{name}: no samples")
        if self.trace_path:
            lines.append(f"trace: {self.trace_path}")
        lines.append("RESULT: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def session_from_config(cfg: AppConfig, *, user_id: str = "anonymous",
                        locale: str = "en", **overrides) -> Session:
    kwargs = dict(
        user_id=user_id,
        locale=locale,
        vad_config=cfg.vad,
        monitor_config=make_monitor_config(cfg),
        templates=make_templates(cfg),
        preemption_check_items=cfg.pipeline.preemption_check_items,
        max_queue_bytes=cfg.pipeline.max_queue_bytes,
        trace_path=cfg.pipeline.trace_path,
        block_duration_ms=cfg.judgement.block_duration_ms,
        context_budget_chars=cfg.memory.budget_chars,
    )
    kwargs.update(overrides)
    return Session(make_backend_set(cfg), make_judge(cfg), **kwargs)


async def _pump_outbox(session: Session, log: list) -> None:
    while True:
        item = await session.outbox.get()
        log.append((time.monotonic() * 1000.0, item))


async def run_script_async(events: Sequence[ScriptEvent], cfg: AppConfig,
                           trace_out: Optional[Union[str, Path]] = None) -> RunReport:
    session = session_from_config(cfg, trace_path=trace_out)
    report = RunReport(trace_path=str(trace_out) if trace_out else None)
    outlog: list = []
    pump = asyncio.create_task(_pump_outbox(session, outlog))
    session.start()
    t0 = time.monotonic() * 1000.0
    action_cursor = 0
    mic_seq = 0
    chunk_s = cfg.vad.chunk_ms / 1000.0

    def elapsed() -> float:
        return time.monotonic() * 1000.0 - t0

    try:
        for ev in events:
            if ev.at_ms > elapsed():
                await asyncio.sleep((ev.at_ms - elapsed()) / 1000.0)

            if ev.kind == "send_audio":
                if ev.freq_hz is not None:
                    chunks = tone_chunks(ev.freq_hz, ev.amplitude, ev.duration_ms,
                                         chunk_ms=cfg.vad.chunk_ms)
                else:
                    chunks = silence_chunks(ev.duration_ms, chunk_ms=cfg.vad.chunk_ms)
                for chunk in chunks:
                    session.feed_frame(protocol.AudioFrame(
                        channel=protocol.AudioChannel.CLIENT_MIC,
                        seq=mic_seq,
                        samples=tuple(int(s) for s in chunk.samples)))
                    mic_seq += 1
                    await asyncio.sleep(chunk_s)

            elif ev.kind == "send_text":
                session.feed_text(ev.text)

            elif ev.kind == "manual_interrupt":
                session.interrupt("text")

            elif ev.kind == "expect_state":
                start = time.monotonic() * 1000.0
                ok = False
                while time.monotonic() * 1000.0 - start <= ev.within_ms:
                    if session.state.value == ev.state:
                        ok = True
                        break
                    await asyncio.sleep(0.002)
                took = time.monotonic() * 1000.0 - start
                report.expectations.append(ExpectationResult(
                    description=f"expect_state {ev.state} within {ev.within_ms}ms",
                    passed=ok,
                    detail="" if ok else f"state stayed {session.state.value}",
                    elapsed_ms=took))

            elif ev.kind == "expect_action":
                start = time.monotonic() * 1000.0
                ok = False
                seen = []
                while time.monotonic() * 1000.0 - start <= ev.within_ms:
                    while action_cursor < len(outlog):
                        _, item = outlog[action_cursor]
                        action_cursor += 1
                        if isinstance(item, protocol.ControlMessage) and item.type == "action":
                            seen.append(item.payload["strategy"])
                            if item.payload["strategy"] == ev.strategy:
                                ok = True
                    if ok:
                        break
                    await asyncio.sleep(0.002)
                took = time.monotonic() * 1000.0 - start
                report.expectations.append(ExpectationResult(
                    description=f"expect_action {ev.strategy} within {ev.within_ms}ms",
                    passed=ok,
                    detail="" if ok else f"actions seen: {seen or 'none'}",
                    elapsed_ms=took))

        # let in-flight work settle so the trace is complete
        try:
            await session.wait_idle(timeout_s=10.0)
        except TimeoutError:
            pass
    finally:
        pump.cancel()
        session.end()

    _collect_latencies(session, report)
    return report


def _collect_latencies(session: Session, report: RunReport) -> None:
    records = session.trace.records
    for i, rec in enumerate(records):
        if rec.event == EventKind.USER_INTERRUPT.value and rec.latency_ms is not None:
            report.interrupt_latencies_ms.append(rec.latency_ms)
        if rec.event == EventKind.SPEECH_END.value:
            for later in records[i + 1:]:
                if later.event == EventKind.RESPONSE_READY.value:
                    report.response_latencies_ms.append(float(later.ts_ms - rec.ts_ms))
                    break
                if later.event == EventKind.SPEECH_END.value:
                    break


def run_script(events: Sequence[ScriptEvent], cfg: AppConfig,
               trace_out: Optional[Union[str, Path]] = None) -> RunReport:
    return asyncio.run(run_script_async(events, cfg, trace_out))


# ---------------------------------------------------------------------------
# Barge-in benchmark

async def bench_async(trials: int, llm_delay_ms: int = 2000,
                      tts_chunks: int = 100) -> dict:
    """Measure interrupt -> listening latency over repeated barge-ins.

    Each trial interrupts a turn that is mid-LLM (the slow stub keeps the
    call in flight), which is the worst case for preemption.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    latencies = []
    for _ in range(trials):
        backends = stub_backends()
        backends.llm = StubLlm(delta_delay_ms=llm_delay_ms)
        backends.tts = StubTts(fixed_chunks=tts_chunks)
        session = Session(backends, RuleJudge())
        session.start()
        session.feed_text("hello there")
        await asyncio.sleep(0)  # let the turn task reach the LLM await
        report = session.interrupt("text")
        latencies.append(report.latency_ms)
        session.end()
        await asyncio.sleep(0)
    return {
        "trials": trials,
        "p50": percentile(latencies, 50),
        "p90": percentile(latencies, 90),
        "p99": percentile(latencies, 99),
        "max": max(latencies),
    }


def bench(trials: int, **kwargs) -> dict:
    return asyncio.run(bench_async(trials, **kwargs))


def render_bench(result: dict) -> str:
    return (
        f"barge-in latency over {result['trials']} trials: "
        f"p50={result['p50']:.3f}ms p90={result['p90']:.3f}ms "
        f"p99={result['p99']:.3f}ms max={result['max']:.3f}ms"
    )
