"""
Talking to the websocket server from a client
=============================================

Start the server in-process on a free port, connect a plain websocket
client, handshake, run one text exchange, interrupt mid-reply, and
close.  The same wire traffic works from any language.
"""

import asyncio

from websockets.asyncio.client import connect

from s2s import protocol
from s2s.config import parse_config
from s2s.server import S2sServer


def control(mtype, payload, seq=0):
    return protocol.encode_control(protocol.ControlMessage(
        type=mtype, seq=seq, ts_ms=0, payload=payload)).decode()


async def main():
    cfg = parse_config({"server": {"host": "127.0.0.1", "port": 0}})
    server = S2sServer(cfg)
    task = asyncio.create_task(server.run())
    await server.started.wait()
    print(f"server on port {server.port}")

    async with connect(f"ws://127.0.0.1:{server.port}/session") as ws:
        await ws.send(control("session.start", {
            "sample_rate": 16000, "encoding": "pcm16le",
            "user_id": "demo", "locale": "en"}))
        await ws.send(control("text.input", {"text": "tell me a long story"}, seq=1))

        interrupted = False
        audio_frames = 0
        while True:
            raw = await ws.recv()
            if isinstance(raw, bytes) and not raw.startswith(b"{"):
                audio_frames += 1
                if not interrupted and audio_frames >= 3:
                    # barge in once a little audio has played
                    await ws.send(control("interrupt.manual", {}, seq=2))
                    interrupted = True
                continue
            msg = protocol.decode_control(raw if isinstance(raw, bytes)
                                          else raw.encode())
            print(f"{msg.type:14s} {msg.payload}")
            if msg.type == "interrupt.ack":
                break

        await ws.send(control("session.end", {}, seq=3))

    print(f"audio frames before the interrupt: {audio_frames}")
    server.stop()
    await task


asyncio.run(main())
