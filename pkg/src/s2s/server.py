"""Websocket front door: one socket per conversation.

Clients connect to ws://host:port/session, open with a session.start
handshake (16 kHz PCM16 only), then stream microphone audio as binary
frames and control messages as JSON text frames.  Each connection gets
its own Session; the access control list is shared across all of them.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
from pathlib import Path
from typing import Optional

from websockets.asyncio.server import ServerConnection, serve
from websockets.exceptions import ConnectionClosed

from . import protocol
from .config import AppConfig, load_acl
from .pipeline import Session, SessionError
from .simulate import session_from_config

log = logging.getLogger("s2s.server")

SESSION_PATH = "/session"


class S2sServer:
    def __init__(self, cfg: AppConfig):
        self.cfg = cfg
        self.acl = load_acl(cfg)
        self._session_ids = itertools.count(1)
        self._stopped = asyncio.Event()
        self.started = asyncio.Event()
        self.port = cfg.server.port  # rebound once the socket is up (port 0 means "pick one")

    def stop(self) -> None:
        self._stopped.set()

    async def run(self) -> None:
        """Serve until stop(); then persist the ACL and flush traces."""
        async with serve(self._handle, self.cfg.server.host, self.cfg.server.port) as ws_server:
            sockets = ws_server.sockets or []
            if sockets:
                self.port = sockets[0].getsockname()[1]
            self.started.set()
            log.info("listening on ws://%s:%d%s", self.cfg.server.host, self.port, SESSION_PATH)
            await self._stopped.wait()
        if self.cfg.judgement.acl_path:
            self.acl.save(self.cfg.judgement.acl_path)

    def _trace_path(self, session_id: int) -> Optional[str]:
        base = self.cfg.pipeline.trace_path
        if not base:
            return None
        p = Path(base)
        return str(p.with_name(f"{p.stem}-{session_id}{p.suffix or '.ndjson'}"))

    async def _handle(self, ws: ServerConnection) -> None:
        if ws.request is not None and ws.request.path != SESSION_PATH:
            await ws.close(code=1008, reason=f"unknown path, use {SESSION_PATH}")
            return
        session_id = next(self._session_ids)
        session = await self._open_session(ws, session_id)
        if session is None:
            return
        sender = asyncio.create_task(self._send_loop(ws, session))
        try:
            await self._receive_loop(ws, session)
        except ConnectionClosed:
            pass
        finally:
            sender.cancel()
            session.end()
            log.info("session %d closed (%d trace records)", session_id, len(session.trace))

    async def _open_session(self, ws: ServerConnection, session_id: int) -> Optional[Session]:
        """First frame must be the handshake; anything else ends the socket."""
        try:
            raw = await ws.recv()
        except ConnectionClosed:
            return None
        try:
            msg = protocol.decode_control(_as_bytes(raw))
            wire_cfg = protocol.validate_handshake(msg, chunk_ms=self.cfg.vad.chunk_ms)
        except (protocol.DecodeError, protocol.HandshakeError) as e:
            await _send_error(ws, "handshake", str(e))
            await ws.close(code=1002, reason="handshake failed")
            return None
        session = session_from_config(
            self.cfg,
            user_id=wire_cfg.user_id,
            locale=wire_cfg.locale,
            acl=self.acl,
            trace_path=self._trace_path(session_id),
        )
        session.start()
        log.info("session %d: user=%s locale=%s", session_id, wire_cfg.user_id, wire_cfg.locale)
        return session

    async def _receive_loop(self, ws: ServerConnection, session: Session) -> None:
        async for raw in ws:
            try:
                if isinstance(raw, bytes) and raw[:1] != b"{":
                    frame = protocol.decode_audio(raw)
                    if frame.channel is not protocol.AudioChannel.CLIENT_MIC:
                        await _send_error(ws, "protocol", "clients send only mic audio")
                        continue
                    session.feed_frame(frame)
                    continue
                msg = protocol.decode_control(_as_bytes(raw))
                if msg.type == "text.input":
                    session.feed_text(msg.payload["text"])
                elif msg.type == "interrupt.manual":
                    session.interrupt("text")
                elif msg.type == "session.end":
                    return
                elif msg.type == "session.start":
                    await _send_error(ws, "protocol", "session already started")
                else:
                    await _send_error(ws, "protocol", f"unexpected {msg.type}")
            except protocol.DecodeError as e:
                await _send_error(ws, "decode", str(e))
            except SessionError:
                return

    async def _send_loop(self, ws: ServerConnection, session: Session) -> None:
        try:
            while True:
                item = await session.outbox.get()
                if isinstance(item, protocol.ControlMessage):
                    await ws.send(protocol.encode_control(item).decode("utf-8"))
                else:
                    await ws.send(protocol.encode_audio(item))
        except (ConnectionClosed, asyncio.CancelledError):
            pass


def _as_bytes(raw) -> bytes:
    return raw if isinstance(raw, bytes) else raw.encode("utf-8")


async def _send_error(ws: ServerConnection, code: str, detail: str) -> None:
    msg = protocol.ControlMessage(
        type="error", seq=0, ts_ms=0, payload={"code": code, "detail": detail})
    try:
        await ws.send(protocol.encode_control(msg).decode("utf-8"))
    except ConnectionClosed:
        pass


async def serve_forever(cfg: AppConfig) -> None:
    """Run the server wired to SIGINT/SIGTERM for clean shutdown."""
    import signal

    server = S2sServer(cfg)
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, server.stop)
        except NotImplementedError:  # platforms without signal support
            pass
    await server.run()
