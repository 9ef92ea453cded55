"""
Escalation: repeated affronts earn a timed block
================================================

The first insult is ignored (no_response).  A second one inside the
repeat window escalates to a block: every input is rejected with a
notice until the clock reaches the expiry, then the session listens
again on its own.
"""

import asyncio

from s2s import protocol
from s2s.backends import stub_backends
from s2s.judgement import RuleJudge
from s2s.pipeline import ManualClock, Session


def show(session):
    while not session.outbox.empty():
        item = session.outbox.get_nowait()
        if isinstance(item, protocol.ControlMessage):
            print(f"  {item.type:14s} {item.payload}")


async def main():
    # a manual clock makes the expiry arithmetic visible
    clock = ManualClock(1000)
    judge = RuleJudge(clock_ms=lambda: int(clock.now_ms()))
    session = Session(stub_backends(), judge, clock=clock.now_ms,
                      playback_pace_ms=0, block_duration_ms=60_000)
    session.start()

    print("first affront (ignored):")
    session.feed_text("you are stupid")
    await session.wait_idle()
    show(session)

    print("second affront inside the window (blocks):")
    session.feed_text("shut up")
    await session.wait_idle()
    show(session)
    print(f"  state={session.state.value}, "
          f"expiry={session.acl.expiry(session.user_id)} ms")

    print("input while blocked:")
    session.feed_text("hello?")
    await session.wait_idle()
    show(session)

    clock.advance(59_999)
    session.poll_block()
    print(f"one tick before expiry: state={session.state.value}")

    clock.advance(1)
    session.poll_block()
    print(f"at the expiry instant:  state={session.state.value}")

    session.end()


asyncio.run(main())
