"""
Barge-in: preemptive interruption of a long reply
=================================================

Start a reply long enough to still be playing, interrupt it, and
inspect what the preemption cost: latency to get back to listening,
frames purged from the playout queue, and model tasks cancelled.
"""

import asyncio

from s2s import protocol
from s2s.backends import stub_backends
from s2s.judgement import RuleJudge
from s2s.pipeline import PipelineState, Session, verify_replay


async def main():
    # 100 fixed synthesis chunks = 2 s of audio at the 20 ms frame pace
    session = Session(stub_backends(tts_fixed_chunks=100), RuleJudge())
    session.start()
    session.feed_text("tell me everything you know")

    while session.state is not PipelineState.SPEAKING:
        await asyncio.sleep(0.002)
    await asyncio.sleep(0.05)  # let a couple of frames go out

    report = session.interrupt("text")
    print(f"state after interrupt: {session.state.value}")
    print(f"latency to listening:  {report.latency_ms:.3f} ms")
    print(f"frames purged:         {report.purged_frames}")
    print(f"tasks cancelled:       {report.cancelled_tasks}")

    await session.wait_idle()

    # no audio may follow the acknowledgement
    items = []
    while not session.outbox.empty():
        items.append(session.outbox.get_nowait())
    ack_at = next(i for i, m in enumerate(items)
                  if isinstance(m, protocol.ControlMessage)
                  and m.type == "interrupt.ack")
    trailing = [m for m in items[ack_at:] if isinstance(m, protocol.AudioFrame)]
    print(f"audio frames after ack: {len(trailing)}")

    # the recorded trace replays through the state machine
    verify_replay(session.trace)
    print("trace replays cleanly")

    session.end()


asyncio.run(main())
