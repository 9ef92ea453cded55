"""
A first conversation over the in-process session
=================================================

Send one typed turn through the full pipeline (judgement, reply
generation, speech synthesis) and watch every message the server
would transmit.
"""

import asyncio

from s2s import protocol
from s2s.backends import stub_backends
from s2s.judgement import RuleJudge
from s2s.pipeline import Session


async def main():
    # a session owns the state machine; stubs stand in for real models
    session = Session(stub_backends(), RuleJudge(), user_id="demo")
    session.start()

    session.feed_text("hi there, what can you do?")
    await session.wait_idle()

    # everything a client would receive, in transmission order
    while not session.outbox.empty():
        item = session.outbox.get_nowait()
        if isinstance(item, protocol.ControlMessage):
            print(f"{item.type:14s} {item.payload}")
        else:
            print(f"audio frame    seq={item.seq} ({len(item.samples)} samples)")

    session.end()


asyncio.run(main())
