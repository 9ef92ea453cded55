"""The interaction core.

A session is one finite state machine over four phases (listening,
processing, speaking, blocked) plus the machinery around it: a priority
task queue for backend work, cooperative cancellation for preemptive
barge-in, an append-only trace, and the orchestration that ties
ASR -> memory -> judgement -> LLM -> TTS together.

transition() is pure; Session owns the only mutable state and applies
events synchronously on the event loop, so no await can observe a
half-applied transition.  Backend work runs in spawned tasks that report
back by dispatching further events.
"""

from __future__ import annotations

import asyncio
import heapq
import json
import time
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Awaitable, Callable, Optional, Union

from . import protocol
from .audio import AudioChunk, PurgeableQueue, VadConfig, VadEvent, VadState, vad_step
from .backends import BackendError, BackendSet
from .cancellation import CancelToken, OperationCancelled
from .judgement import (
    APPLY_BLOCK_GUIDANCE,
    FALLBACK_DECISION,
    AccessControlList,
    JudgeMode,
    JudgementDecision,
    MonitorConfig,
    PartialMonitor,
    Pathway,
    ResponseStrategy,
    preset_template,
    route,
)
from .memory import MemoryStore, Speaker, Turn, UserProfile, build_context


class PipelineState(Enum):
    LISTENING = "listening"
    PROCESSING = "processing"
    SPEAKING = "speaking"
    BLOCKED = "blocked"


class EventKind(Enum):
    SPEECH_START = "speech_start"
    SPEECH_END = "speech_end"
    TEXT_INPUT = "text_input"
    USER_INTERRUPT = "user_interrupt"
    AGENT_INTERRUPT = "agent_interrupt"
    RESPONSE_READY = "response_ready"
    PLAYBACK_DONE = "playback_done"
    BLOCK_APPLIED = "block_applied"
    BLOCK_EXPIRED = "block_expired"


# Events a user originates, as opposed to ones the session produces.
INPUT_EVENTS = frozenset({
    EventKind.SPEECH_START,
    EventKind.SPEECH_END,
    EventKind.TEXT_INPUT,
    EventKind.USER_INTERRUPT,
})


@dataclass(frozen=True)
class PipelineEvent:
    kind: EventKind
    source: Optional[str] = None                      # user_interrupt: voice | text
    text: Optional[str] = None                        # text_input / truncated partial
    decision: Optional[JudgementDecision] = None      # agent_interrupt
    duration: Optional[Union[int, str]] = None        # block_applied: ms or "permanent"


class Action(Enum):
    RUN_TURN = "run_turn"
    START_PLAYBACK = "start_playback"
    CANCEL_BACKENDS = "cancel_backends"
    PURGE_OUTPUT = "purge_output"
    EMIT_INTERRUPT_ACK = "emit_interrupt_ack"
    EMIT_PRESET_TEMPLATE = "emit_preset_template"
    SCHEDULE_CONTINUATION = "schedule_continuation"
    EMIT_BLOCKED_NOTICE = "emit_blocked_notice"


def transition(
    state: PipelineState, event: Union[PipelineEvent, EventKind]
) -> tuple[PipelineState, tuple[Action, ...]]:
    """Pure transition table; unlisted (state, event) pairs are no-ops.

    Dropping stale events beats failing a duplex session over a race.
    """
    kind = event.kind if isinstance(event, PipelineEvent) else event

    if kind is EventKind.BLOCK_APPLIED:
        return PipelineState.BLOCKED, (
            Action.EMIT_BLOCKED_NOTICE,
            Action.CANCEL_BACKENDS,
            Action.PURGE_OUTPUT,
        )

    if state is PipelineState.BLOCKED:
        if kind is EventKind.BLOCK_EXPIRED:
            return PipelineState.LISTENING, ()
        if kind in INPUT_EVENTS:
            return PipelineState.BLOCKED, (Action.EMIT_BLOCKED_NOTICE,)
        return PipelineState.BLOCKED, ()

    if kind is EventKind.USER_INTERRUPT:
        if state in (PipelineState.SPEAKING, PipelineState.PROCESSING):
            return PipelineState.LISTENING, (
                Action.CANCEL_BACKENDS,
                Action.PURGE_OUTPUT,
                Action.EMIT_INTERRUPT_ACK,
            )
        return PipelineState.LISTENING, (Action.EMIT_INTERRUPT_ACK,)

    if state is PipelineState.LISTENING:
        if kind in (EventKind.SPEECH_END, EventKind.TEXT_INPUT):
            return PipelineState.PROCESSING, (Action.RUN_TURN,)
        if kind is EventKind.AGENT_INTERRUPT:
            return PipelineState.SPEAKING, (
                Action.EMIT_PRESET_TEMPLATE,
                Action.SCHEDULE_CONTINUATION,
            )

    if state is PipelineState.PROCESSING and kind is EventKind.RESPONSE_READY:
        return PipelineState.SPEAKING, (Action.START_PLAYBACK,)

    if state is PipelineState.SPEAKING and kind is EventKind.PLAYBACK_DONE:
        return PipelineState.LISTENING, ()

    return state, ()


# ---------------------------------------------------------------------------
# Priority task queue

class Priority(IntEnum):
    CONTROL = 0
    INTERRUPT = 1
    RESPONSE = 2
    BACKGROUND = 3


class SubmitError(Exception):
    """Submission to a closed queue."""


@dataclass
class PrioritizedTask:
    priority: Priority
    enqueue_seq: int
    name: str
    run: Callable[[CancelToken], Awaitable[None]]
    token: CancelToken = field(default_factory=CancelToken)

    @property
    def sort_key(self) -> tuple[int, int]:
        return (int(self.priority), self.enqueue_seq)


class TaskQueue:
    """Heap of pending work, drained in (priority, enqueue_seq) order.

    enqueue_seq is unique, so heap entries never tie and FIFO holds
    within a priority level.
    """

    def __init__(self):
        self._heap: list[tuple[tuple[int, int], PrioritizedTask]] = []
        self._seq = 0
        self._closed = False

    def submit(
        self,
        priority: Priority,
        name: str,
        run: Callable[[CancelToken], Awaitable[None]],
        token: Optional[CancelToken] = None,
    ) -> PrioritizedTask:
        if self._closed:
            raise SubmitError("task queue is closed")
        task = PrioritizedTask(
            priority=priority,
            enqueue_seq=self._seq,
            name=name,
            run=run,
            token=token or CancelToken(),
        )
        self._seq += 1
        heapq.heappush(self._heap, (task.sort_key, task))
        return task

    def next(self) -> Optional[PrioritizedTask]:
        if not self._heap:
            return None
        return heapq.heappop(self._heap)[1]

    def drop_pending(self, min_priority: Priority) -> list[PrioritizedTask]:
        """Remove and return every pending task at or below the given
        urgency (numerically >= min_priority)."""
        dropped = [t for _, t in self._heap if t.priority >= min_priority]
        kept = [(k, t) for k, t in self._heap if t.priority < min_priority]
        heapq.heapify(kept)
        self._heap = kept
        return dropped

    def close(self) -> None:
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed

    def __len__(self) -> int:
        return len(self._heap)


# ---------------------------------------------------------------------------
# Trace

NOTE_EVENT = "note"


class TraceError(Exception):
    pass


@dataclass(frozen=True)
class TraceRecord:
    ts_ms: int
    state: str
    event: str           # an EventKind value, or "note"
    action: str          # "+"-joined action names, or a note label
    latency_ms: Optional[float] = None
    digest: str = ""

    def as_dict(self) -> dict:
        d = {
            "ts_ms": self.ts_ms,
            "state": self.state,
            "event": self.event,
            "action": self.action,
            "digest": self.digest,
        }
        if self.latency_ms is not None:
            d["latency_ms"] = self.latency_ms
        return d


class SessionTrace:
    """Append-only record of everything a session did."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, record: TraceRecord) -> None:
        if self.records and record.ts_ms < self.records[-1].ts_ms:
            raise TraceError(
                f"timestamp regression: {record.ts_ms} after {self.records[-1].ts_ms}")
        self.records.append(record)

    def save(self, path: Union[str, Path]) -> None:
        lines = [json.dumps(r.as_dict(), separators=(",", ":"), ensure_ascii=False)
                 for r in self.records]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SessionTrace":
        trace = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            trace.append(TraceRecord(
                ts_ms=doc["ts_ms"],
                state=doc["state"],
                event=doc["event"],
                action=doc["action"],
                latency_ms=doc.get("latency_ms"),
                digest=doc.get("digest", ""),
            ))
        return trace

    def __len__(self) -> int:
        return len(self.records)


def verify_replay(
    trace: SessionTrace, initial: PipelineState = PipelineState.LISTENING
) -> list[PipelineState]:
    """Re-apply the trace's events through transition() and check the
    recorded states match exactly; returns the replayed state sequence."""
    state = initial
    states = []
    for i, rec in enumerate(trace.records):
        if rec.event == NOTE_EVENT:
            if rec.state != state.value:
                raise TraceError(f"record {i}: note in state {rec.state!r}, replay says {state.value!r}")
            continue
        state, _ = transition(state, EventKind(rec.event))
        states.append(state)
        if rec.state != state.value:
            raise TraceError(f"record {i}: recorded {rec.state!r}, replay says {state.value!r}")
    return states


# ---------------------------------------------------------------------------
# Clocks

def monotonic_ms() -> float:
    return time.monotonic() * 1000.0


class ManualClock:
    """Deterministic clock for tests; advance() moves time forward."""

    def __init__(self, start_ms: float = 0.0):
        self._now = float(start_ms)

    def now_ms(self) -> float:
        return self._now

    def advance(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("clock cannot go backward")
        self._now += ms


# ---------------------------------------------------------------------------
# Session

class SessionError(Exception):
    pass


@dataclass
class InterruptReport:
    latency_ms: float = 0.0
    purged_frames: int = 0
    cancelled_tasks: int = 0


@dataclass
class _Generation:
    """One response in flight: its cancel token and playback bookkeeping."""

    gen_id: int
    token: CancelToken
    t_start_ms: float
    synthesis_done: bool = False
    frames: int = 0
    ready_sent: bool = False
    playback_started: bool = False


class Session:
    """One conversation: owns the state machine and all side effects.

    Outbound protocol objects (ControlMessage / AudioFrame) appear on
    ``outbox`` in transmission order; a transport loop forwards them.
    All public input methods are synchronous and must be called on the
    event loop thread.
    """

    def __init__(
        self,
        backends: BackendSet,
        judge,
        *,
        user_id: str = "anonymous",
        locale: str = "en",
        store: Optional[MemoryStore] = None,
        acl: Optional[AccessControlList] = None,
        vad_config: Optional[VadConfig] = None,
        monitor_config: Optional[MonitorConfig] = None,
        templates: Optional[dict[str, str]] = None,
        clock: Callable[[], float] = monotonic_ms,
        playback_pace_ms: Optional[float] = None,
        max_queue_bytes: int = 2 * 1024 * 1024,
        preemption_check_items: int = 1,
        block_duration_ms: Union[int, str] = 60_000,
        context_budget_chars: int = 2000,
        trace_path: Optional[Union[str, Path]] = None,
    ):
        self.backends = backends
        self.judge = judge
        self.user_id = user_id
        self.locale = locale
        self.store = store or MemoryStore(UserProfile(user_id=user_id, locale=locale))
        self.acl = acl or AccessControlList()
        self.templates = templates
        self._clock = clock
        self._vad_config = vad_config or VadConfig()
        self.monitor = PartialMonitor(judge, monitor_config)
        self.playback_pace_ms = (
            playback_pace_ms if playback_pace_ms is not None else self._vad_config.chunk_ms
        )
        self.preemption_check_items = max(1, preemption_check_items)
        self.block_duration_ms = block_duration_ms
        self.context_budget_chars = context_budget_chars
        self.trace_path = trace_path

        self.state = PipelineState.LISTENING
        self.trace = SessionTrace()
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.playout = PurgeableQueue(max_bytes=max_queue_bytes)
        self.tasks = TaskQueue()
        self.input_log: list[int] = []
        self.last_report = InterruptReport()

        self._running: dict[int, tuple[PrioritizedTask, asyncio.Task]] = {}
        self._vad = VadState.initial(self._vad_config)
        self._speech_active = False
        self._utt_start_ms = 0.0
        self._utt_id = 0
        self._last_partial = ""
        self._generation: Optional[_Generation] = None
        self._gen_counter = 0
        self._ctl_seq = 0
        self._tts_seq = 0
        self._monitor_skips_noted = 0
        self._closed = False

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        """Emit the opening state notice; restore a standing block."""
        self._note("session.start", digest=self.user_id)
        self._emit_state()
        now = int(self._clock())
        if self.acl.is_blocked(self.user_id, now):
            self._dispatch(PipelineEvent(
                EventKind.BLOCK_APPLIED, duration=self.acl.expiry(self.user_id)))

    def end(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._cancel_response_work()
        self.tasks.close()
        for _, (pt, task) in list(self._running.items()):
            pt.token.cancel()
            task.cancel()
        self._running.clear()
        self._note("session.end")
        if self.trace_path is not None:
            self.trace.save(self.trace_path)

    @property
    def closed(self) -> bool:
        return self._closed

    async def wait_idle(self, timeout_s: float = 10.0) -> None:
        """Block until no backend work is running and playback finished."""
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if not self._running and self.state in (
                PipelineState.LISTENING, PipelineState.BLOCKED
            ):
                return
            await asyncio.sleep(0.002)
        raise TimeoutError("session did not go idle")

    # -- inputs ------------------------------------------------------------

    def feed_frame(self, frame: protocol.AudioFrame) -> None:
        """One 20 ms microphone frame off the wire."""
        if self._closed:
            raise SessionError("session is closed")
        self.input_log.append(frame.seq)
        self.poll_block()
        chunk = AudioChunk.from_samples(
            frame.samples, seq=frame.seq,
            t_start_ms=frame.seq * self._vad_config.chunk_ms)
        self._vad, event = vad_step(self._vad, chunk)

        if self.state is PipelineState.BLOCKED:
            # VAD still runs so speech attempts get a (single) notice,
            # but nothing reaches ASR while blocked.
            if event is VadEvent.SPEECH_START:
                self._dispatch(PipelineEvent(EventKind.SPEECH_START))
            elif event is VadEvent.SPEECH_END:
                self._speech_active = False
                self._dispatch(PipelineEvent(EventKind.SPEECH_END))
            return

        if event is VadEvent.SPEECH_START:
            self._utt_id += 1
            self._utt_start_ms = self._clock()
            self._speech_active = True
            self._last_partial = ""
            if hasattr(self.backends.asr, "reset"):
                self.backends.asr.reset()
            self.monitor.reset()
            if self.state in (PipelineState.SPEAKING, PipelineState.PROCESSING):
                self.interrupt("voice")
            self._dispatch(PipelineEvent(EventKind.SPEECH_START))

        if self._speech_active:
            partial = self.backends.asr.feed(chunk)
            if partial is not None and partial != self._last_partial:
                self._last_partial = partial
                self._emit_control("asr.partial", {"text": partial})
                self._maybe_monitor(partial)

        if event is VadEvent.SPEECH_END and self._speech_active:
            self._speech_active = False
            self._dispatch(PipelineEvent(EventKind.SPEECH_END))

    def feed_text(self, text: str) -> None:
        if self._closed:
            raise SessionError("session is closed")
        self.poll_block()
        if self.state is PipelineState.BLOCKED:
            self._dispatch(PipelineEvent(EventKind.TEXT_INPUT, text=text))
            return
        # Typed input during output is a barge-in, same as voice.
        if self.state in (PipelineState.SPEAKING, PipelineState.PROCESSING):
            self.interrupt("text")
        self._dispatch(PipelineEvent(EventKind.TEXT_INPUT, text=text))

    def interrupt(self, source: str = "text") -> InterruptReport:
        if self._closed:
            raise SessionError("session is closed")
        self.poll_block()
        self._dispatch(PipelineEvent(EventKind.USER_INTERRUPT, source=source))
        return self.last_report

    def poll_block(self) -> None:
        """Lazily expire a block; cheap enough to call on every input."""
        if self.state is PipelineState.BLOCKED and not self.acl.is_blocked(
            self.user_id, int(self._clock())
        ):
            self._dispatch(PipelineEvent(EventKind.BLOCK_EXPIRED))

    # -- event application ---------------------------------------------------

    def _dispatch(self, event: PipelineEvent) -> None:
        receipt = self._clock()
        old = self.state
        new_state, actions = transition(old, event)
        self.state = new_state
        ts = self._clock()
        latency = None
        if event.kind in (EventKind.USER_INTERRUPT, EventKind.AGENT_INTERRUPT,
                          EventKind.BLOCK_APPLIED):
            latency = ts - receipt
            self.last_report = InterruptReport(latency_ms=latency)
        # State-change record precedes the actions' own notes.
        self.trace.append(TraceRecord(
            ts_ms=int(ts),
            state=new_state.value,
            event=event.kind.value,
            action="+".join(a.value for a in actions),
            latency_ms=latency,
            digest=_event_digest(event),
        ))
        for action in actions:
            self._apply(action, event)
        if new_state is not old:
            self._emit_state()
        if latency is not None:
            self.last_report.latency_ms = self._clock() - receipt

    def _apply(self, action: Action, event: PipelineEvent) -> None:
        if action is Action.RUN_TURN:
            gen = self._new_generation()
            from_speech = event.kind is EventKind.SPEECH_END
            text = event.text or ""
            self._spawn(
                f"turn#{gen.gen_id}", Priority.RESPONSE,
                lambda token, g=gen, s=from_speech, t=text: self._turn_task(g, s, t, token),
                token=gen.token)

        elif action is Action.START_PLAYBACK:
            self._ensure_playback()

        elif action is Action.CANCEL_BACKENDS:
            self.last_report.cancelled_tasks += self._cancel_response_work()

        elif action is Action.PURGE_OUTPUT:
            self.last_report.purged_frames += self.playout.purge()

        elif action is Action.EMIT_INTERRUPT_ACK:
            self._emit_control("interrupt.ack", {"source": event.source or "text"})

        elif action is Action.EMIT_PRESET_TEMPLATE:
            # The agent takes the floor: acknowledge, announce the action,
            # and close out the user's truncated utterance.
            decision = event.decision or FALLBACK_DECISION
            self._emit_control("interrupt.ack", {"source": "agent"})
            self._emit_control("action", {
                "strategy": ResponseStrategy.INTERRUPT.value,
                "guidance": decision.guidance,
            })
            self._ingest(Speaker.USER, event.text or "",
                         self._utt_start_ms, self._clock())
            self._speech_active = False
            if hasattr(self.backends.asr, "reset"):
                self.backends.asr.reset()

        elif action is Action.SCHEDULE_CONTINUATION:
            gen = self._new_generation()
            decision = event.decision or FALLBACK_DECISION
            partial = event.text or ""
            self._spawn(
                f"continuation#{gen.gen_id}", Priority.RESPONSE,
                lambda token, g=gen, p=partial, d=decision: self._continuation_task(g, p, d, token),
                token=gen.token)

        elif action is Action.EMIT_BLOCKED_NOTICE:
            until = self.acl.expiry(self.user_id)
            if until is None:
                until = int(self._clock())
            self._emit_control("blocked", {"until_ms": until})

    # -- task plumbing -------------------------------------------------------

    def _spawn(self, name, priority, run, token=None) -> None:
        try:
            self.tasks.submit(priority, name, run, token=token)
        except SubmitError:
            return
        while (pt := self.tasks.next()) is not None:
            task = asyncio.create_task(pt.run(pt.token), name=pt.name)
            self._running[pt.enqueue_seq] = (pt, task)
            task.add_done_callback(
                lambda _t, seq=pt.enqueue_seq: self._running.pop(seq, None))

    def _cancel_response_work(self) -> int:
        n = 0
        for pt in self.tasks.drop_pending(Priority.RESPONSE):
            pt.token.cancel()
            n += 1
        for seq, (pt, task) in list(self._running.items()):
            if pt.priority >= Priority.RESPONSE:
                pt.token.cancel()
                task.cancel()
                self._running.pop(seq, None)
                n += 1
        if self._generation is not None:
            self._generation.token.cancel()
        return n

    def _new_generation(self) -> _Generation:
        if self._generation is not None:
            self._generation.token.cancel()
        self._gen_counter += 1
        self._generation = _Generation(
            gen_id=self._gen_counter, token=CancelToken(), t_start_ms=self._clock())
        return self._generation

    # -- backend orchestration ------------------------------------------------

    async def _turn_task(self, gen: _Generation, from_speech: bool, text: str,
                         token: CancelToken) -> None:
        try:
            if from_speech:
                text = await self.backends.asr.finish()
                self._emit_control("asr.final", {"text": text})
                t_start = self._utt_start_ms
            else:
                t_start = self._clock()
            if token.cancelled:
                return
            self._ingest(Speaker.USER, text, t_start, self._clock())
            context = build_context(
                self.store, text, int(self._clock()),
                budget_chars=self.context_budget_chars)
            try:
                decision = await self.judge.classify(context, text, JudgeMode.COMPLETE)
            except (asyncio.CancelledError, OperationCancelled):
                raise
            except Exception as e:
                self._note("judge.error", digest=type(e).__name__)
                decision = FALLBACK_DECISION
            if token.cancelled:
                return
            self._emit_control("action", {
                "strategy": decision.strategy.value,
                "guidance": decision.guidance,
            })
            self._note("judge", digest=decision.strategy.value)

            pathway = route(decision)
            if pathway is Pathway.MODEL_FREE:
                if decision.guidance == APPLY_BLOCK_GUIDANCE:
                    now = int(self._clock())
                    self.acl.apply_block(self.user_id, self.block_duration_ms, now)
                    self.store.profile.block_history.append(
                        {"at_ms": now, "duration": self.block_duration_ms})
                    self._dispatch(PipelineEvent(
                        EventKind.BLOCK_APPLIED, duration=self.block_duration_ms))
                    return
                # Deliberate silence: an empty response that immediately
                # completes, putting the session back in listening.
                gen.synthesis_done = True
                self._ready(gen)
                return

            prefix = None
            if pathway is Pathway.SPECIAL_CASE:
                prefix = preset_template(ResponseStrategy.INTERRUPT, self.locale, self.templates)
            await self._generate_reply(gen, context, decision, token, prefix)
        except (asyncio.CancelledError, OperationCancelled):
            raise
        except Exception as e:
            self._backend_failure(gen, e)

    async def _continuation_task(self, gen: _Generation, partial: str,
                                 decision: JudgementDecision, token: CancelToken) -> None:
        """Agent-initiated interruption: preset template audio first (no
        model call before its first frame), then the model continues from
        the truncated input."""
        try:
            template = preset_template(ResponseStrategy.INTERRUPT, self.locale, self.templates)
            await self._synth_into(gen, template, token)
            if token.cancelled:
                return
            context = build_context(
                self.store, partial, int(self._clock()),
                budget_chars=self.context_budget_chars)
            reply = await self._stream_deltas(gen, context, decision, token)
            if reply is None:
                return
            await self._synth_into(gen, reply, token)
            if token.cancelled:
                return
            gen.synthesis_done = True
            self._ready(gen)
            self._ingest(Speaker.AGENT, f"{template} {reply}".strip(),
                         gen.t_start_ms, self._clock(),
                         strategy=ResponseStrategy.INTERRUPT.value)
        except (asyncio.CancelledError, OperationCancelled):
            raise
        except Exception as e:
            self._backend_failure(gen, e)

    async def _generate_reply(self, gen: _Generation, context, decision,
                              token: CancelToken, prefix: Optional[str]) -> None:
        if prefix:
            await self._synth_into(gen, prefix, token)
            if token.cancelled:
                return
        reply = await self._stream_deltas(gen, context, decision, token)
        if reply is None:
            return
        await self._synth_into(gen, reply, token)
        if token.cancelled:
            return
        gen.synthesis_done = True
        self._ready(gen)
        spoken = f"{prefix} {reply}".strip() if prefix else reply
        self._ingest(Speaker.AGENT, spoken, gen.t_start_ms, self._clock(),
                     strategy=decision.strategy.value)

    async def _stream_deltas(self, gen, context, decision, token) -> Optional[str]:
        """Run the LLM, forwarding deltas; None means cancelled."""
        guidance = f"[{decision.strategy.value}] {decision.guidance}".rstrip()
        reply = ""
        items = 0
        async for delta in self.backends.llm.generate(context, guidance, token):
            items += 1
            if items % self.preemption_check_items == 0 and token.cancelled:
                return None
            self._emit_control("llm.delta", {"text": delta})
            reply += delta
        if token.cancelled:
            return None
        return reply

    async def _synth_into(self, gen: _Generation, text: str, token: CancelToken) -> None:
        async for chunk in self.backends.tts.synthesize(text, token):
            if token.cancelled:
                return
            self.playout.append(chunk)
            gen.frames += 1
            if not gen.ready_sent:
                self._ready(gen)

    def _ready(self, gen: _Generation) -> None:
        if gen.ready_sent or gen is not self._generation or gen.token.cancelled:
            return
        gen.ready_sent = True
        self._dispatch(PipelineEvent(EventKind.RESPONSE_READY))
        if self.state is PipelineState.SPEAKING:
            self._ensure_playback()

    def _ensure_playback(self) -> None:
        gen = self._generation
        if gen is None or gen.playback_started or gen.token.cancelled:
            return
        gen.playback_started = True
        self._spawn(
            f"playback#{gen.gen_id}", Priority.RESPONSE,
            lambda token, g=gen: self._playback_task(g, token),
            token=gen.token)

    async def _playback_task(self, gen: _Generation, token: CancelToken) -> None:
        """Paced sender: one frame per chunk interval onto the outbox."""
        pace_s = self.playback_pace_ms / 1000.0
        while not token.cancelled:
            frame = self.playout.pop()
            if frame is None:
                if gen.synthesis_done:
                    if gen is self._generation and self.state is PipelineState.SPEAKING:
                        self._dispatch(PipelineEvent(EventKind.PLAYBACK_DONE))
                    return
                await asyncio.sleep(0.002)
                continue
            self.outbox.put_nowait(protocol.AudioFrame(
                channel=protocol.AudioChannel.SERVER_TTS,
                seq=self._tts_seq,
                samples=tuple(int(s) for s in frame.samples),
            ))
            self._tts_seq += 1
            await asyncio.sleep(pace_s)

    def _backend_failure(self, gen: _Generation, err: Exception) -> None:
        code = err.kind.value if isinstance(err, BackendError) else "backend"
        self._emit_control("error", {"code": code, "detail": str(err)})
        self._note("backend.error", digest=code)
        if not gen.token.cancelled:
            gen.synthesis_done = True
            self._ready(gen)  # empty response completes, back to listening

    # -- monitor ---------------------------------------------------------------

    def _maybe_monitor(self, partial: str) -> None:
        if self.state is not PipelineState.LISTENING:
            return
        now = self._clock()
        if not self.monitor.due(partial, int(now)):
            return
        self.monitor.note_eval(partial, int(now))
        utt = self._utt_id
        context = build_context(
            self.store, partial, int(now), budget_chars=self.context_budget_chars)
        self._spawn(
            f"monitor#{utt}", Priority.BACKGROUND,
            lambda token, c=context, p=partial, u=utt: self._monitor_task(c, p, u, token))

    async def _monitor_task(self, context, partial: str, utt_id: int,
                            token: CancelToken) -> None:
        deadline_s = self.monitor.config.deadline_ms / 1000.0
        decision = await self.monitor.run_classify(
            context, partial,
            run_with_deadline=lambda call: asyncio.wait_for(call, deadline_s))
        if self.monitor.deadline_skips > self._monitor_skips_noted:
            self._monitor_skips_noted = self.monitor.deadline_skips
            self._note("monitor.skip")
        if decision is None or token.cancelled:
            return
        if utt_id != self._utt_id or self.state is not PipelineState.LISTENING or self._closed:
            return  # utterance already over; stale verdict
        self._dispatch(PipelineEvent(
            EventKind.AGENT_INTERRUPT, text=partial, decision=decision))

    # -- small helpers -----------------------------------------------------------

    def _ingest(self, speaker: Speaker, text: str, t_start: float, t_end: float,
                strategy: Optional[str] = None) -> None:
        start, end = int(t_start), int(t_end)
        last = self.store.last_turn
        if last is not None and start < last.t_start_ms:
            start = last.t_start_ms
        if end < start:
            end = start
        self.store.ingest_turn(Turn(
            speaker=speaker, text=text, t_start_ms=start, t_end_ms=end,
            strategy=strategy))

    def _emit_control(self, mtype: str, payload: dict) -> None:
        msg = protocol.ControlMessage(
            type=mtype, seq=self._ctl_seq, ts_ms=int(self._clock()), payload=payload)
        self._ctl_seq += 1
        self.outbox.put_nowait(msg)

    def _emit_state(self) -> None:
        self._emit_control("state", {"state": self.state.value})

    def _note(self, label: str, digest: str = "") -> None:
        self.trace.append(TraceRecord(
            ts_ms=int(self._clock()), state=self.state.value,
            event=NOTE_EVENT, action=label, digest=digest))


def _event_digest(event: PipelineEvent) -> str:
    parts = []
    if event.source:
        parts.append(event.source)
    if event.text:
        parts.append(event.text[:24])
    if event.decision is not None:
        parts.append(event.decision.strategy.value)
    if event.duration is not None:
        parts.append(str(event.duration))
    return " ".join(parts)
