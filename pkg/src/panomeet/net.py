"""Live asyncio transport in front of the session engine.

One listening port carries three things, told apart by the first bytes
of each connection:

* newline-delimited JSON sessions (first byte ``{``) - used by scripted
  peers and debugging tools,
* WebSocket sessions at ``/session`` (HTTP Upgrade) - used by the
  browser viewer, one message per text frame,
* plain HTTP GETs - ``/room/`` serves the manifest and panorama images,
  anything else is served from an optional static directory (the built
  viewer).

All engine access happens on the event loop, so events are naturally
serialized into one total order; connection I/O is concurrent but only
ever enqueues work for that single logical context.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import logging
import struct
import time
from pathlib import Path

from .eventlog import EventLogWriter, synthetic_leave
from .protocol import DEFAULT_PORT, ProtocolError, WEBSOCKET_PATH, decode_message, encode_message
from .room import Room, serialize_manifest
from .server import DEFAULT_TICK_HZ, Effects, SessionEngine

log = logging.getLogger(__name__)

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".svg": "image/svg+xml",
    ".map": "application/json",
}


# --- minimal RFC 6455 framing (server side) --------------------------------


def ws_accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def ws_encode_frame(opcode: int, payload: bytes) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < (1 << 16):
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def ws_encode_text(payload: bytes) -> bytes:
    return ws_encode_frame(0x1, payload)


def ws_encode_close(code: int = 1000) -> bytes:
    return ws_encode_frame(0x8, struct.pack(">H", code))


async def ws_read_message(
    reader: asyncio.StreamReader, writer: asyncio.StreamWriter | None = None
) -> bytes | None:
    """Next complete text/binary message, transparently answering pings.

    Returns None when the peer closes (close frame or EOF).
    """
    buffer = b""
    while True:
        try:
            head = await reader.readexactly(2)
        except (asyncio.IncompleteReadError, ConnectionResetError):
            return None
        fin = head[0] & 0x80
        opcode = head[0] & 0x0F
        masked = head[1] & 0x80
        length = head[1] & 0x7F
        if length == 126:
            length = struct.unpack(">H", await reader.readexactly(2))[0]
        elif length == 127:
            length = struct.unpack(">Q", await reader.readexactly(8))[0]
        mask = await reader.readexactly(4) if masked else b""
        payload = await reader.readexactly(length) if length else b""
        if mask:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        if opcode == 0x8:  # close
            return None
        if opcode == 0x9:  # ping -> pong, keep reading
            if writer is not None:
                writer.write(ws_encode_frame(0xA, payload))
            continue
        if opcode == 0xA:  # unsolicited pong
            continue
        buffer += payload
        if fin:
            return buffer


class _Conn:
    def __init__(self, conn_id: str, writer: asyncio.StreamWriter, websocket: bool):
        self.conn_id = conn_id
        self.writer = writer
        self.websocket = websocket
        self.open = True

    def send(self, encoded: bytes):
        if not self.open:
            return
        if self.websocket:
            self.writer.write(ws_encode_text(encoded.rstrip(b"\n")))
        else:
            self.writer.write(encoded)

    def close(self):
        if not self.open:
            return
        self.open = False
        try:
            if self.websocket:
                self.writer.write(ws_encode_close())
            self.writer.close()
        except (ConnectionError, RuntimeError):
            pass


class LiveServer:
    def __init__(
        self,
        room: Room,
        room_dir: str | Path | None = None,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        tick_hz: float = DEFAULT_TICK_HZ,
        log_path: str | Path | None = None,
        static_dir: str | Path | None = None,
    ):
        self.room = room
        self.room_dir = Path(room_dir) if room_dir else None
        self.host = host
        self.port = port
        self.tick_hz = tick_hz
        self.static_dir = Path(static_dir) if static_dir else None
        self.engine = SessionEngine(room, tick_hz=tick_hz)
        self.writer = EventLogWriter(log_path, room) if log_path else None
        self.conns: dict[str, _Conn] = {}
        self._next_conn = 1
        self._server: asyncio.AbstractServer | None = None
        self._tick_task: asyncio.Task | None = None

    # --- engine plumbing ----------------------------------------------------

    def _now_ms(self) -> float:
        return time.time() * 1000.0

    def _dispatch(self, effects: Effects):
        for conn_id, env in effects.messages:
            encoded = encode_message(env)
            if self.writer:
                self.writer.log_out(conn_id, encoded)
            conn = self.conns.get(conn_id)
            if conn is not None:
                conn.send(encoded)
        for conn_id in effects.close:
            conn = self.conns.pop(conn_id, None)
            if conn is not None:
                conn.close()

    def _feed_line(self, conn_id: str, raw: bytes):
        try:
            env = decode_message(raw)
        except ProtocolError as exc:
            from .protocol import ErrorMsg, envelope

            log.warning("conn %s sent a bad line: %s", conn_id, exc)
            bad = envelope(ErrorMsg("bad_message", str(exc)), seq=0, ts_ms=self.engine.clock_ms)
            conn = self.conns.get(conn_id)
            if conn is not None:
                conn.send(encode_message(bad))
            return
        if self.writer:
            self.writer.log_in(conn_id, raw)
        self._dispatch(self.engine.handle(conn_id, env))

    def _drop_conn(self, conn_id: str):
        if conn_id not in self.conns:
            return
        if self.engine._conn_session.get(conn_id):
            leave_line = synthetic_leave(self.engine.clock_ms)
            if self.writer:
                self.writer.log_in(conn_id, leave_line)
            self._dispatch(self.engine.handle(conn_id, decode_message(leave_line)))
        conn = self.conns.pop(conn_id, None)
        if conn is not None:
            conn.close()

    async def _tick_loop(self):
        period = 1.0 / self.tick_hz
        while True:
            await asyncio.sleep(period)
            now = self._now_ms()
            if self.writer:
                self.writer.log_tick(now)
            self._dispatch(self.engine.tick(now))

    # --- connection handling -------------------------------------------------

    async def _handle_conn(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        try:
            first = await reader.read(1)
        except ConnectionError:
            writer.close()
            return
        if not first:
            writer.close()
            return
        if first == b"{":
            await self._serve_ndjson(first, reader, writer)
        else:
            await self._serve_http(first, reader, writer)

    async def _serve_ndjson(self, first: bytes, reader, writer):
        conn_id = f"tcp-{self._next_conn}"
        self._next_conn += 1
        self.conns[conn_id] = _Conn(conn_id, writer, websocket=False)
        buffer = first
        try:
            while True:
                chunk = await reader.read(4096)
                if not chunk:
                    break
                buffer += chunk
                while b"\n" in buffer:
                    line, _, buffer = buffer.partition(b"\n")
                    if line.strip():
                        self._feed_line(conn_id, line)
                    if conn_id not in self.conns:
                        return  # engine closed us (e.g. duplicate hello)
        except ConnectionError:
            pass
        finally:
            self._drop_conn(conn_id)

    async def _serve_http(self, first: bytes, reader, writer):
        head = first
        while b"\r\n\r\n" not in head and len(head) < 65536:
            chunk = await reader.read(4096)
            if not chunk:
                break
            head += chunk
        request, _, _ = head.partition(b"\r\n\r\n")
        lines = request.decode("latin-1").split("\r\n")
        parts = lines[0].split(" ")
        if len(parts) != 3:
            writer.close()
            return
        method, path, _version = parts
        headers = {}
        for line in lines[1:]:
            key, _, value = line.partition(":")
            headers[key.strip().lower()] = value.strip()

        if headers.get("upgrade", "").lower() == "websocket":
            if path.split("?")[0] != WEBSOCKET_PATH:
                writer.write(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n")
                await writer.drain()
                writer.close()
                return
            await self._serve_websocket(headers, reader, writer)
            return
        if method != "GET":
            writer.write(b"HTTP/1.1 405 Method Not Allowed\r\nContent-Length: 0\r\n\r\n")
        else:
            writer.write(self._http_response(path))
        try:
            await writer.drain()
        except ConnectionError:
            pass
        writer.close()

    def _http_response(self, path: str) -> bytes:
        path = path.split("?")[0]
        body, ctype = self._lookup_static(path)
        if body is None:
            return b"HTTP/1.1 404 Not Found\r\nContent-Length: 9\r\n\r\nnot found"
        headers = (
            f"HTTP/1.1 200 OK\r\nContent-Type: {ctype}\r\n"
            f"Content-Length: {len(body)}\r\nAccess-Control-Allow-Origin: *\r\n"
            "Connection: close\r\n\r\n"
        )
        return headers.encode() + body

    def _lookup_static(self, path: str):
        if path in ("/room/manifest.json", "/room/"):
            return serialize_manifest(self.room).encode(), _CONTENT_TYPES[".json"]
        if path.startswith("/room/"):
            if self.room_dir is None:
                return None, None
            target = (self.room_dir / path[len("/room/") :]).resolve()
            if not str(target).startswith(str(self.room_dir.resolve())) or not target.is_file():
                return None, None
            return target.read_bytes(), _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        if self.static_dir is None:
            return None, None
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())):
            return None, None
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return None, None
        return target.read_bytes(), _CONTENT_TYPES.get(target.suffix, "application/octet-stream")

    async def _serve_websocket(self, headers, reader, writer):
        key = headers.get("sec-websocket-key")
        if not key:
            writer.write(b"HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n")
            await writer.drain()
            writer.close()
            return
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {ws_accept_key(key)}\r\n\r\n"
        )
        writer.write(response.encode())
        await writer.drain()
        conn_id = f"ws-{self._next_conn}"
        self._next_conn += 1
        self.conns[conn_id] = _Conn(conn_id, writer, websocket=True)
        try:
            while True:
                message = await ws_read_message(reader, writer)
                if message is None:
                    break
                if message.strip():
                    self._feed_line(conn_id, message)
                if conn_id not in self.conns:
                    return
        except ConnectionError:
            pass
        finally:
            self._drop_conn(conn_id)

    # --- lifecycle ------------------------------------------------------------

    async def start(self):
        self._server = await asyncio.start_server(self._handle_conn, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        self._tick_task = asyncio.create_task(self._tick_loop())
        log.info("listening on %s:%s", self.host, self.port)

    async def stop(self):
        if self._tick_task:
            self._tick_task.cancel()
        for conn in list(self.conns.values()):
            conn.close()
        self.conns.clear()
        if self._server:
            self._server.close()
            await self._server.wait_closed()
        if self.writer:
            self.writer.close()

    async def serve_forever(self):
        await self.start()
        try:
            await asyncio.Event().wait()
        finally:
            await self.stop()


def run_server(
    manifest_path: str | Path,
    host: str = "0.0.0.0",
    port: int = DEFAULT_PORT,
    tick_hz: float = DEFAULT_TICK_HZ,
    log_path: str | Path | None = None,
    static_dir: str | Path | None = None,
):
    from .room import load_manifest

    manifest_path = Path(manifest_path)
    room = load_manifest(manifest_path)
    server = LiveServer(
        room,
        room_dir=manifest_path.parent,
        host=host,
        port=port,
        tick_hz=tick_hz,
        log_path=log_path,
        static_dir=static_dir,
    )
    try:
        asyncio.run(server.serve_forever())
    except KeyboardInterrupt:
        pass
