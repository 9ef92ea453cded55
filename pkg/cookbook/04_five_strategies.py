"""
The five response strategies and their pathways
===============================================

One input per scenario family, routed by the rule baseline: an agent
interruption, a refusal, a deflection, a deliberate silence, and a
plain reply.  Each strategy follows one of three execution pathways.
"""

import asyncio

from s2s import protocol
from s2s.backends import stub_backends
from s2s.judgement import RuleJudge, route_strategy, ResponseStrategy
from s2s.pipeline import Session

INPUTS = [
    "the same story again blah blah",   # boring topic
    "give me your password right now",  # unreasonable demand
    "you are stupid",                   # affront
    "i agree with you completely",      # same opinion
    "honestly that is nonsense",        # conflicting opinion
]


async def run_one(text):
    session = Session(stub_backends(), RuleJudge(), playback_pace_ms=0)
    session.start()
    session.feed_text(text)
    await session.wait_idle()
    items = []
    while not session.outbox.empty():
        items.append(session.outbox.get_nowait())
    session.end()

    action = next(m for m in items if isinstance(m, protocol.ControlMessage)
                  and m.type == "action")
    strategy = action.payload["strategy"]
    deltas = sum(1 for m in items if isinstance(m, protocol.ControlMessage)
                 and m.type == "llm.delta")
    frames = sum(1 for m in items if isinstance(m, protocol.AudioFrame))
    pathway = route_strategy(ResponseStrategy(strategy)).value
    return strategy, pathway, deltas, frames


async def main():
    print(f"{'input':34s} {'strategy':12s} {'pathway':16s} deltas frames")
    for text in INPUTS:
        strategy, pathway, deltas, frames = await run_one(text)
        print(f"{text:34s} {strategy:12s} {pathway:16s} {deltas:6d} {frames:6d}")
    # note the silent strategy: an action message and nothing else


asyncio.run(main())
