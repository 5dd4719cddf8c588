"""Replayable event logs for the session engine.

Format, one record per line:

    ROOM <manifest-json>          optional header making the log self-contained
    IN <conn> <envelope-json>     inbound envelope from a connection
    TICK <ms>                     engine tick at the given time
    OUT <conn> <envelope-json>    envelope the engine emitted

IN and TICK lines are the engine's complete input; OUT lines are its
recorded output. Replaying feeds the inputs to a fresh engine in order
and demands the emitted lines match the recorded OUT lines byte for
byte, which catches both nondeterminism and tampering.
"""

from __future__ import annotations

import json
from pathlib import Path

from .protocol import decode_message, encode_message, envelope as make_envelope
from .room import Room, parse_manifest, serialize_manifest
from .server import DEFAULT_TICK_HZ, Effects, SessionEngine


class LogFormatError(ValueError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no


class ReplayMismatchError(ValueError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"replay diverged at line {line_no}: {detail}")
        self.line_no = line_no


class EventLogWriter:
    def __init__(self, path: str | Path, room: Room | None = None):
        self._fh = open(path, "wb")
        if room is not None:
            compact = json.dumps(json.loads(serialize_manifest(room)), separators=(",", ":"))
            self._fh.write(b"ROOM " + compact.encode() + b"\n")

    def log_in(self, conn_id: str, encoded: bytes):
        self._fh.write(b"IN " + conn_id.encode() + b" " + encoded.rstrip(b"\n") + b"\n")

    def log_out(self, conn_id: str, encoded: bytes):
        self._fh.write(b"OUT " + conn_id.encode() + b" " + encoded.rstrip(b"\n") + b"\n")

    def log_tick(self, now_ms: float):
        self._fh.write(f"TICK {now_ms:g}".encode() + b"\n")

    def close(self):
        self._fh.flush()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def synthetic_leave(clock_ms: float) -> bytes:
    """Encoded Leave recorded when a connection drops without saying goodbye."""
    from .protocol import Leave

    return encode_message(make_envelope(Leave(), seq=0, ts_ms=clock_ms))


def parse_log(data: bytes):
    """Yield (line_no, kind, conn_or_none, payload) records."""
    for line_no, raw in enumerate(data.split(b"\n"), start=1):
        if not raw.strip():
            continue
        if raw.startswith(b"ROOM "):
            yield line_no, "ROOM", None, raw[5:]
        elif raw.startswith(b"IN ") or raw.startswith(b"OUT "):
            kind = "IN" if raw.startswith(b"IN ") else "OUT"
            rest = raw[3:] if kind == "IN" else raw[4:]
            conn, sep, payload = rest.partition(b" ")
            if not sep:
                raise LogFormatError(line_no, f"{kind} record missing payload")
            yield line_no, kind, conn.decode(), payload
        elif raw.startswith(b"TICK "):
            try:
                yield line_no, "TICK", None, float(raw[5:])
            except ValueError as exc:
                raise LogFormatError(line_no, f"bad tick time: {exc}") from exc
        else:
            raise LogFormatError(line_no, f"unrecognized record: {raw[:30]!r}")


def replay(data: bytes, room: Room | None = None, tick_hz: float = DEFAULT_TICK_HZ) -> SessionEngine:
    """Re-apply the log's inputs and verify the outputs byte for byte.

    The room comes from the log's ROOM header when present, otherwise it
    must be passed in. Returns the engine in its final state.
    """
    records = list(parse_log(data))
    if records and records[0][1] == "ROOM":
        room = parse_manifest(records[0][3].decode())
        records = records[1:]
    if room is None:
        raise LogFormatError(0, "log has no ROOM header; a manifest is required")

    engine = SessionEngine(room, tick_hz=tick_hz)
    pending: list[tuple[int, str, bytes]] = []  # (src line, conn, encoded)

    def flush_inputs(line_no: int):
        if pending:
            conn, payload = pending[0][1], pending[0][2]
            raise ReplayMismatchError(
                line_no, f"log is missing an OUT line for {conn}: {payload[:60]!r}"
            )

    def run_effects(line_no: int, effects: Effects):
        for conn_id, env in effects.messages:
            pending.append((line_no, conn_id, encode_message(env).rstrip(b"\n")))

    for line_no, kind, conn, payload in records:
        if kind == "IN":
            flush_inputs(line_no)
            env = decode_message(payload)
            run_effects(line_no, engine.handle(conn, env))
        elif kind == "TICK":
            flush_inputs(line_no)
            run_effects(line_no, engine.tick(payload))
        elif kind == "OUT":
            if not pending:
                raise ReplayMismatchError(line_no, "log has an OUT line the engine did not emit")
            _, want_conn, want_payload = pending.pop(0)
            if conn != want_conn or payload != want_payload:
                raise ReplayMismatchError(
                    line_no,
                    f"expected OUT {want_conn} {want_payload[:60]!r}, "
                    f"log has OUT {conn} {payload[:60]!r}",
                )
        else:
            raise LogFormatError(line_no, "ROOM header must be the first record")
    if pending:
        raise ReplayMismatchError(
            len(data.split(b"\n")), f"engine emitted {len(pending)} lines past the log's end"
        )
    return engine
