"""
Voice input: energy VAD and utterance boundaries
================================================

Feed a synthetic tone burst followed by silence and watch the
detector declare speech start/end, the recognizer stream partials,
and the pipeline answer once the utterance closes.
"""

import asyncio

from s2s import protocol
from s2s.audio import silence_chunks, tone_chunks
from s2s.backends import stub_backends
from s2s.judgement import RuleJudge
from s2s.pipeline import Session


def as_frames(chunks, start_seq=0):
    for i, chunk in enumerate(chunks):
        yield protocol.AudioFrame(
            channel=protocol.AudioChannel.CLIENT_MIC,
            seq=start_seq + i,
            samples=tuple(int(s) for s in chunk.samples))


async def main():
    session = Session(stub_backends(), RuleJudge())
    session.start()

    # 800 ms of 440 Hz tone, then 600 ms of silence: the silence is what
    # closes the utterance (500 ms hangover by default)
    speech = list(tone_chunks(440.0, 8000, 800))
    quiet = list(silence_chunks(600))
    for frame in as_frames(speech + quiet):
        session.feed_frame(frame)
        await asyncio.sleep(0)  # frames land between pipeline steps

    await session.wait_idle()

    while not session.outbox.empty():
        item = session.outbox.get_nowait()
        if isinstance(item, protocol.ControlMessage):
            print(f"{item.type:14s} {item.payload}")

    # the trace records when the detector fired
    for rec in session.trace.records:
        if rec.event in ("speech_start", "speech_end"):
            print(f"trace: {rec.event} at {rec.ts_ms} ms")

    session.end()


asyncio.run(main())
