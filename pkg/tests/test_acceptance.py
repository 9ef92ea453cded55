"""Release gate: every shipping criterion as one test, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` for the compact report.
Each test states its tolerance inline and fails honestly when the build
does not meet it; nothing here is allowed to weaken a threshold.
"""

import asyncio
import random
import string
import time

import pytest

from conftest import audio_frames, controls, dc_chunk, drain, mic_frame
from s2s import protocol
from s2s.audio import VadConfig, VadEvent, VadState, vad_step
from s2s.backends import BackendSet, StubAsr, StubLlm, StubTts, stub_backends
from s2s.judgement import (
    AccessControlList,
    FALLBACK_DECISION,
    MonitorConfig,
    PartialMonitor,
    Pathway,
    ResponseStrategy,
    RuleJudge,
    LlmJudge,
    llm_judge_parse,
    make_decision,
    route_strategy,
    ParseError,
)
from s2s.memory import MemoryStore, build_context
from s2s.pipeline import (
    NOTE_EVENT,
    EventKind,
    ManualClock,
    PipelineState,
    Session,
    SessionTrace,
    TraceError,
    TraceRecord,
    transition,
    verify_replay,
)
from s2s.sftdata import (
    BuildConfig,
    Label,
    SourceDialogue,
    Utterance,
    annotate_pauses,
    build_dataset,
    evaluate,
    export_records,
    render_report_row,
)
from s2s.simulate import parse_script, percentile, run_script
from s2s.config import parse_config

S = PipelineState


def verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    assert ok, line


TEXT_POOL = (string.ascii_letters + string.digits + string.punctuation
             + " \t\n" + "éüñ日本語中文😀«» ")


def rand_text(rng, max_len=40):
    return "".join(rng.choice(TEXT_POOL) for _ in range(rng.randrange(max_len)))


# --- criterion 1: protocol round-trip ----------------------------------------

def random_control(rng) -> protocol.ControlMessage:
    mtype = rng.choice(sorted(protocol.KNOWN_TYPES))
    if mtype == "session.start":
        payload = {"sample_rate": rng.randrange(8000, 96000),
                   "encoding": rand_text(rng, 12),
                   "user_id": rand_text(rng), "locale": rand_text(rng, 8)}
    elif mtype in ("text.input", "asr.partial", "asr.final", "llm.delta"):
        payload = {"text": rand_text(rng)}
    elif mtype in ("interrupt.manual", "session.end"):
        payload = {}
    elif mtype == "state":
        payload = {"state": rng.choice(protocol.STATES)}
    elif mtype == "action":
        payload = {"strategy": rng.choice(protocol.STRATEGIES),
                   "guidance": rand_text(rng)}
    elif mtype == "interrupt.ack":
        payload = {"source": rng.choice(protocol.INTERRUPT_SOURCES)}
    elif mtype == "blocked":
        payload = {"until_ms": "permanent" if rng.random() < 0.2
                   else rng.randrange(2 ** 48)}
    else:  # error
        payload = {"code": rand_text(rng, 12), "detail": rand_text(rng)}
    return protocol.ControlMessage(
        type=mtype, seq=rng.randrange(2 ** 31), ts_ms=rng.randrange(2 ** 48),
        payload=payload)


def random_frame(rng) -> protocol.AudioFrame:
    return protocol.AudioFrame(
        channel=rng.choice((protocol.AudioChannel.CLIENT_MIC,
                            protocol.AudioChannel.SERVER_TTS)),
        seq=rng.randrange(protocol.MAX_FRAME_SEQ + 1),
        samples=tuple(rng.randrange(-32768, 32768)
                      for _ in range(rng.randrange(1, 321))))


def test_criterion_protocol_round_trip():
    # 10,000 of each message kind survive decode(encode(x)) == x, and
    # 10,000 random byte strings never crash a decoder; all under 10 s.
    rng = random.Random(1)
    t0 = time.perf_counter()
    for _ in range(10_000):
        msg = random_control(rng)
        assert protocol.decode_control(protocol.encode_control(msg)) == msg
        frame = random_frame(rng)
        assert protocol.decode_audio(protocol.encode_audio(frame)) == frame
    crashes = 0
    for _ in range(10_000):
        blob = rng.randbytes(rng.randrange(0, 64))
        for decoder in (protocol.decode_control, protocol.decode_audio):
            try:
                decoder(blob)
            except protocol.DecodeError:
                pass
            except Exception:
                crashes += 1
    elapsed = time.perf_counter() - t0
    ok = crashes == 0 and elapsed < 10.0
    verdict("protocol round-trip", ok,
            f"10000+10000 round-trips, 10000 fuzz inputs, {crashes} crashes, "
            f"{elapsed:.2f}s")


# --- criterion 2: state machine replay ---------------------------------------

def test_criterion_fsm_replay():
    # 1,000 random event sequences replay to the recorded states exactly,
    # and the machine is always in exactly one of the four states.
    rng = random.Random(2)
    failures = 0
    for _ in range(1000):
        trace = SessionTrace()
        state = S.LISTENING
        ts = 0
        for _ in range(rng.randrange(5, 40)):
            ts += rng.randrange(1, 50)
            if rng.random() < 0.15:
                trace.append(TraceRecord(ts_ms=ts, state=state.value,
                                         event=NOTE_EVENT, action="note"))
                continue
            event = rng.choice(list(EventKind))
            state, _ = transition(state, event)
            assert isinstance(state, PipelineState)
            trace.append(TraceRecord(ts_ms=ts, state=state.value,
                                     event=event.value, action=""))
        try:
            verify_replay(trace)
        except TraceError:
            failures += 1

    # replay rejects tampering (one flipped state must be caught)
    trace = SessionTrace()
    trace.append(TraceRecord(ts_ms=1, state="processing", event="text_input", action=""))
    trace.append(TraceRecord(ts_ms=2, state="listening", event="response_ready", action=""))
    try:
        verify_replay(trace)
        tamper_caught = False
    except TraceError:
        tamper_caught = True

    # traces from real sessions replay too
    async def real_traces():
        sessions = []
        for text in ("hi", "blah blah", "you are stupid"):
            s = Session(stub_backends(), RuleJudge(), playback_pace_ms=0)
            s.start()
            s.feed_text(text)
            await s.wait_idle()
            s.end()
            sessions.append(s)
        return sessions

    live_ok = True
    for s in asyncio.run(real_traces()):
        try:
            verify_replay(s.trace)
        except TraceError:
            live_ok = False

    ok = failures == 0 and tamper_caught and live_ok
    verdict("state machine replay", ok,
            f"1000 synthetic sequences, {failures} mismatches, "
            f"tamper detected: {tamper_caught}, live traces ok: {live_ok}")


# --- criterion 3: preemption latency ------------------------------------------

def test_criterion_preemption_latency():
    # With a 2 s stub LLM and 100 queued TTS chunks, barge-in reaches
    # Listening with p99 <= 40 ms over 500 trials, no audio follows the
    # interrupt ack, and the whole run stays under 2 minutes.
    async def mid_llm_trials(n):
        latencies = []
        for _ in range(n):
            s = Session(stub_backends(llm_delay_ms=2000, tts_fixed_chunks=100),
                        RuleJudge())
            s.start()
            s.feed_text("hello")
            await asyncio.sleep(0)  # the turn task reaches the model await
            latencies.append(s.interrupt("text").latency_ms)
            s.end()
            await asyncio.sleep(0)
        return latencies

    async def speaking_trials(n):
        stray_audio = 0
        for _ in range(n):
            s = Session(stub_backends(tts_fixed_chunks=100), RuleJudge())
            s.start()
            s.feed_text("hello")
            for _ in range(400):
                await asyncio.sleep(0.002)
                if s.state is S.SPEAKING:
                    break
            assert s.state is S.SPEAKING
            await asyncio.sleep(0.03)
            s.interrupt("text")
            await s.wait_idle()
            items = drain(s)
            ack_at = next(i for i, m in enumerate(items)
                          if isinstance(m, protocol.ControlMessage)
                          and m.type == "interrupt.ack")
            stray_audio += len(audio_frames(items[ack_at:]))
            assert s.state is S.LISTENING
            s.end()
        return stray_audio

    t0 = time.perf_counter()
    latencies = asyncio.run(mid_llm_trials(500))
    stray = asyncio.run(speaking_trials(20))
    elapsed = time.perf_counter() - t0
    p99 = percentile(latencies, 99)
    ok = p99 <= 40.0 and stray == 0 and elapsed < 120.0
    verdict("preemption latency", ok,
            f"500 trials, p99={p99:.3f}ms max={max(latencies):.3f}ms, "
            f"{stray} frames after ack over 20 playback trials, {elapsed:.1f}s")


# --- criterion 4: non-blocking ingestion --------------------------------------

def test_criterion_non_blocking_ingestion():
    # While a 2 s model call is in flight the mic stream keeps landing:
    # the input log holds every sequence number with no gaps.
    async def scenario():
        # 250 ms per 4-char delta: a 9-delta reply holds the model call
        # open for ~2.25 s while the mic keeps streaming
        s = Session(stub_backends(llm_delay_ms=250), RuleJudge(),
                    playback_pace_ms=0)
        s.start()
        s.feed_text("ponder this")
        n = 0
        loop = asyncio.get_running_loop()
        t0 = loop.time()
        while loop.time() - t0 < 2.05:
            s.feed_frame(mic_frame(dc_chunk(100), n))  # quiet: below threshold
            n += 1
            await asyncio.sleep(0.002)
        await s.wait_idle()
        items = drain(s)
        s.end()
        return s, n, items

    s, n, items = asyncio.run(scenario())
    deltas = controls(items, "llm.delta")
    gap_free = s.input_log == list(range(n))
    ok = gap_free and n > 200 and len(deltas) > 0
    verdict("non-blocking ingestion", ok,
            f"{n} frames during a 2s model call, gap-free: {gap_free}, "
            f"reply streamed: {len(deltas) > 0}")


# --- criterion 5: voice activity detection ------------------------------------

def run_vad(chunks, cfg):
    state = VadState.initial(cfg)
    events = []
    for i, chunk in enumerate(chunks):
        state, event = vad_step(state, chunk)
        if event is not None:
            events.append((i, event))
    return events


def in_speech(events, n):
    active = False
    flags = []
    bounds = dict(events)
    for i in range(n):
        if bounds.get(i) is VadEvent.SPEECH_START:
            active = True
        flags.append(active)
        if bounds.get(i) is VadEvent.SPEECH_END:
            active = False
    return flags


def test_criterion_vad_properties():
    # Over 1,000 generated streams: identical runs give identical events,
    # events strictly alternate start/end, and scaling samples up never
    # shrinks the detected speech region.  The hangover edge is exact.
    rng = random.Random(5)
    cfg = VadConfig()
    bad = 0
    for _ in range(1000):
        values = []
        for _ in range(rng.randrange(1, 7)):
            loud = rng.random() < 0.5
            run = rng.randrange(1, 12)
            values += [rng.randrange(600, 3000) if loud else rng.randrange(0, 400)
                       for _ in range(run)]
        chunks = [dc_chunk(v, seq=i) for i, v in enumerate(values)]
        scaled = [dc_chunk(min(2 * v, 32767), seq=i) for i, v in enumerate(values)]

        ev1 = run_vad(chunks, cfg)
        if ev1 != run_vad(chunks, cfg):
            bad += 1  # determinism
            continue
        kinds = [k for _, k in ev1]
        expected = [VadEvent.SPEECH_START if i % 2 == 0 else VadEvent.SPEECH_END
                    for i in range(len(kinds))]
        if kinds != expected:
            bad += 1  # alternation
            continue
        base = in_speech(ev1, len(values))
        grown = in_speech(run_vad(scaled, cfg), len(values))
        if any(b and not g for b, g in zip(base, grown)):
            bad += 1  # monotonicity

    # hangover boundary: the 25th silence chunk ends the utterance, not before
    burst = [dc_chunk(1500, seq=i) for i in range(5)]
    quiet = [dc_chunk(0, seq=5 + i) for i in range(25)]
    events = run_vad(burst + quiet[:24], cfg)
    boundary_ok = events == [(4, VadEvent.SPEECH_START)]
    events = run_vad(burst + quiet, cfg)
    boundary_ok = boundary_ok and events == [
        (4, VadEvent.SPEECH_START), (29, VadEvent.SPEECH_END)]

    ok = bad == 0 and boundary_ok
    verdict("vad properties", ok,
            f"1000 streams, {bad} violations, hangover edge exact: {boundary_ok}")


# --- criterion 6: judgement routing --------------------------------------------

def test_criterion_judgement_routing():
    # The five strategies map onto exactly three pathways; a monitor never
    # fires twice per utterance over 1,000 adversarial runs; a judge whose
    # output cannot be parsed can never interrupt or silence anyone.
    partition = {
        ResponseStrategy.INTERRUPT: Pathway.SPECIAL_CASE,
        ResponseStrategy.NO_RESPONSE: Pathway.MODEL_FREE,
        ResponseStrategy.REFUSE: Pathway.MODEL_DEPENDENT,
        ResponseStrategy.DEFLECT: Pathway.MODEL_DEPENDENT,
        ResponseStrategy.STANDARD: Pathway.MODEL_DEPENDENT,
    }
    routing_ok = all(route_strategy(s) is p for s, p in partition.items())

    class EagerJudge:
        async def classify(self, context, text, mode):
            return make_decision(ResponseStrategy.INTERRUPT, 1.0, "now")

    async def one_shot_runs():
        ctx = build_context(MemoryStore(), "", now_ms=0)
        multi_fires = 0
        for _ in range(1000):
            monitor = PartialMonitor(EagerJudge(), MonitorConfig())
            fires = 0
            now = 0
            text = ""
            for _ in range(12):
                text += "keep talking "
                now += 600
                if await monitor.evaluate(ctx, text, now) is not None:
                    fires += 1
            if fires != 1:
                multi_fires += 1
        return multi_fires

    multi_fires = asyncio.run(one_shot_runs())

    rng = random.Random(6)
    near_misses = [
        "STRATEGY=interrupt CONF=0.9; GUIDE=x",
        "STRATEGY=interrupt; CONF=1.7; GUIDE=x",
        "STRATEGY=majestic; CONF=0.5; GUIDE=",
        "CONF=0.5; STRATEGY=interrupt; GUIDE=",
        "STRATEGY=no_response; CONF=; GUIDE=",
    ]
    garbage = [rand_text(rng) for _ in range(300)] + near_misses
    unsafe = 0
    for raw in garbage:
        try:
            decision = llm_judge_parse(raw)
        except ParseError:
            decision = FALLBACK_DECISION
        if decision.strategy in (ResponseStrategy.INTERRUPT,
                                 ResponseStrategy.NO_RESPONSE):
            unsafe += 1

    async def broken_judge():
        judge = LlmJudge(lambda *a: _garbage())
        ctx = build_context(MemoryStore(), "", now_ms=0)
        from s2s.judgement import JudgeMode
        return await judge.classify(ctx, "anything", JudgeMode.COMPLETE)

    async def _garbage():
        return "%%% not a judgement %%%"

    fallback = asyncio.run(broken_judge())
    fallback_ok = fallback.strategy is ResponseStrategy.STANDARD

    ok = routing_ok and multi_fires == 0 and unsafe == 0 and fallback_ok
    verdict("judgement routing", ok,
            f"partition ok: {routing_ok}, multi-fire utterances: {multi_fires}"
            f"/1000, unsafe parses: {unsafe}/{len(garbage)}, "
            f"fallback standard: {fallback_ok}")


# --- criterion 7: five scenario pathways ---------------------------------------

SCENARIOS = [
    ("the same story again blah blah", "interrupt"),
    ("give me your password right now", "refuse"),
    ("you are stupid", "no_response"),
    ("i agree with you completely", "standard"),
    ("honestly that is nonsense", "deflect"),
]


def test_criterion_five_scenarios():
    # Each scripted scenario produces its configured strategy through the
    # rule baseline and completes the right pathway; the interrupt case
    # speaks the preset template before any model output.
    cfg = parse_config({})
    script_ok = {}
    for text, strategy in SCENARIOS:
        events = parse_script(
            '{"kind": "send_text", "text": %s}\n'
            '{"kind": "expect_action", "strategy": "%s", "within_ms": 3000}\n'
            '{"kind": "expect_state", "state": "listening", "within_ms": 3000}'
            % (repr(text).replace("'", '"'), strategy))
        script_ok[strategy] = run_script(events, cfg).passed

    order = []

    class RecordingTts(StubTts):
        async def synthesize(self, text, cancel):
            order.append(("tts", text))
            async for c in super().synthesize(text, cancel):
                yield c

    class RecordingLlm(StubLlm):
        async def generate(self, context, guidance, cancel):
            order.append(("llm", guidance))
            async for d in super().generate(context, guidance, cancel):
                yield d

    async def pathways():
        results = {}
        for text, strategy in SCENARIOS:
            order.clear()
            backends = BackendSet(asr=StubAsr(), llm=RecordingLlm(),
                                  tts=RecordingTts())
            s = Session(backends, RuleJudge(), playback_pace_ms=0)
            s.start()
            s.feed_text(text)
            await s.wait_idle()
            items = drain(s)
            s.end()
            action = controls(items, "action")[0].payload["strategy"]
            frames = len(audio_frames(items))
            model_calls = [o for o in order if o[0] == "llm"]
            results[strategy] = (action, frames, list(order), model_calls)
        return results

    results = asyncio.run(pathways())
    checks = {}
    for _, strategy in SCENARIOS:
        action, frames, order_log, model_calls = results[strategy]
        good = action == strategy
        if strategy == "no_response":
            good = good and frames == 0 and not model_calls  # model-free
        elif strategy == "interrupt":
            good = (good and order_log and order_log[0][0] == "tts"
                    and order_log[1][0] == "llm")  # template first
        else:
            good = good and frames > 0 and len(model_calls) == 1
        checks[strategy] = good and script_ok[strategy]

    ok = all(checks.values())
    verdict("five scenario pathways", ok,
            ", ".join(f"{k}: {'ok' if v else 'BAD'}" for k, v in checks.items()))


# --- criterion 8: blocking ------------------------------------------------------

def test_criterion_blocking():
    # A temporary block at t for d ms rejects input with a notice until
    # exactly t+d, then the session is listening again; a permanent block
    # survives a million-tick clock.
    async def temporary():
        clock = ManualClock(1000)
        judge = RuleJudge(clock_ms=lambda: int(clock.now_ms()))
        s = Session(stub_backends(), judge, clock=clock.now_ms,
                    playback_pace_ms=0, block_duration_ms=60_000)
        s.start()
        s.feed_text("you are stupid")
        await s.wait_idle()
        s.feed_text("shut up")  # second affront inside the window
        await s.wait_idle()
        blocked = s.state is S.BLOCKED
        expiry = s.acl.expiry(s.user_id)

        s.feed_text("hello?")
        await s.wait_idle()
        items = drain(s)
        notice = controls(items, "blocked")
        notice_ok = bool(notice) and notice[-1].payload["until_ms"] == expiry

        clock.advance(expiry - 1 - int(clock.now_ms()))
        s.poll_block()
        before = s.state is S.BLOCKED
        clock.advance(1)
        s.poll_block()
        after = s.state is S.LISTENING
        s.end()
        return blocked, expiry == 61_000, notice_ok, before, after

    blocked, expiry_exact, notice_ok, before, after = asyncio.run(temporary())

    acl = AccessControlList()
    acl.apply_block("u", "permanent", now_ms=0)
    permanent_ok = all(acl.is_blocked("u", tick) for tick in range(1, 1_000_001))

    async def permanent_session():
        clock = ManualClock(0)
        s = Session(stub_backends(), RuleJudge(), acl=acl, user_id="u",
                    clock=clock.now_ms, playback_pace_ms=0)
        s.start()
        clock.advance(1_000_000)
        s.feed_text("hello")
        await s.wait_idle()
        items = drain(s)
        s.end()
        return s.state is S.BLOCKED and bool(controls(items, "blocked"))

    still_blocked = asyncio.run(permanent_session())

    ok = (blocked and expiry_exact and notice_ok and before and after
          and permanent_ok and still_blocked)
    verdict("blocking", ok,
            f"temp block exact at t+60000: {before and after}, notice: "
            f"{notice_ok}, permanent over 1e6 ticks: {permanent_ok and still_blocked}")


# --- criterion 9: training data builder -----------------------------------------

def synthetic_corpus(n=50, seed=42):
    rng = random.Random(seed)
    dialogues = []
    oracle = []
    for di in range(n):
        utts = []
        labels = []
        t = 0
        prev_end = None
        for ui in range(rng.randrange(4, 10)):
            speaker = "user" if ui % 2 == 0 else "agent"
            dur = rng.randrange(300, 1600)
            if prev_end is not None:
                kind = rng.choice(("respond", "continue", "overlap"))
                if kind == "respond":
                    pause = rng.randrange(700, 2500)
                    labels.append(Label.RESPOND)
                elif kind == "continue":
                    pause = rng.randrange(0, 700)
                    labels.append(Label.CONTINUE)
                else:
                    pause = -rng.randrange(1, min(dur, 250))
                    labels.append(Label.INTERRUPT)
                t = prev_end + pause
            text = " ".join(f"w{rng.randrange(40)}" for _ in range(rng.randrange(2, 9)))
            utts.append(Utterance(speaker=speaker, text=text,
                                  t_start_ms=t, t_end_ms=t + dur))
            prev_end = t + dur
            t = prev_end
        dialogues.append(SourceDialogue(id=f"d{di}", utterances=tuple(utts)))
        oracle.append(labels)
    return dialogues, oracle


def test_criterion_sft_dataset():
    # Pause labels match a hand-computed oracle on all 50 dialogues, every
    # truncation negative is a strict prefix of its source utterance, and
    # the same seed always builds byte-identical output.
    dialogues, oracle = synthetic_corpus()
    mismatches = 0
    boundaries = 0
    for d, labels in zip(dialogues, oracle):
        got = [b.label for b in annotate_pauses(d)]
        boundaries += len(got)
        if got != labels:
            mismatches += 1

    examples, manifest = build_dataset(dialogues, BuildConfig(neg_ratio=1.0, seed=13))
    by_id = {d.id: d for d in dialogues}
    prefix_bad = 0
    negatives = 0
    for ex in examples:
        if not ex.is_negative:
            continue
        negatives += 1
        src = by_id[ex.dialogue_id].utterances[len(ex.prefix) - 1]
        cut = ex.prefix[-1]
        if not (src.text.startswith(cut.text) and len(cut.text) < len(src.text)
                and cut.t_end_ms < src.t_end_ms):
            prefix_bad += 1

    def build_bytes(seed):
        ex, _ = build_dataset(dialogues, BuildConfig(neg_ratio=1.0, seed=seed))
        import io
        import json as _json
        return "\n".join(_json.dumps(e.as_dict(), separators=(",", ":"),
                                     ensure_ascii=False) for e in ex).encode()

    identical = build_bytes(13) == build_bytes(13)

    ok = mismatches == 0 and prefix_bad == 0 and negatives > 0 and identical
    verdict("training data builder", ok,
            f"{len(dialogues)} dialogues / {boundaries} boundaries, "
            f"{mismatches} label mismatches, {prefix_bad}/{negatives} bad "
            f"prefixes, same-seed identical: {identical}")


# --- criterion 10: metrics oracle -----------------------------------------------

def test_criterion_metrics_oracle():
    # evaluate() equals brute-force confusion counting on 1,000 random
    # prediction/gold pairs, and the report fixture renders 0.91 0.78 0.83.
    rng = random.Random(9)
    labels = list(Label)
    wrong = 0
    for _ in range(1000):
        n = rng.randrange(1, 60)
        pred = [rng.choice(labels) for _ in range(n)]
        gold = [rng.choice(labels) for _ in range(n)]
        m = evaluate(pred, gold)
        tp = sum(1 for p, g in zip(pred, gold)
                 if p is Label.INTERRUPT and g is Label.INTERRUPT)
        fp = sum(1 for p, g in zip(pred, gold)
                 if p is Label.INTERRUPT and g is not Label.INTERRUPT)
        fn = sum(1 for p, g in zip(pred, gold)
                 if p is not Label.INTERRUPT and g is Label.INTERRUPT)
        tn = n - tp - fp - fn
        exp_precision = tp / (tp + fp) if tp + fp else None
        exp_recall = tp / (tp + fn) if tp + fn else None
        if ((m.tp, m.fp, m.fn, m.tn) != (tp, fp, fn, tn)
                or m.accuracy != (tp + tn) / n
                or m.precision != exp_precision
                or m.recall != exp_recall):
            wrong += 1

    pred = ([Label.INTERRUPT] * 83 + [Label.INTERRUPT] * 23
            + [Label.RESPOND] * 17 + [Label.RESPOND] * 321)
    gold = ([Label.INTERRUPT] * 83 + [Label.RESPOND] * 23
            + [Label.INTERRUPT] * 17 + [Label.RESPOND] * 321)
    row = render_report_row(evaluate(pred, gold))
    row_ok = row == "0.91 0.78 0.83"

    ok = wrong == 0 and row_ok
    verdict("metrics oracle", ok,
            f"1000 pairs, {wrong} disagreements, report row: {row!r}")
