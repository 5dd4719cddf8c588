"""Authoritative session engine: seats, element state, pose/hand relay.

The engine is a deterministic state machine fed a totally ordered stream
of events (inbound envelopes, disconnects, ticks). Transports deliver
events from however many connections they like, but must serialize them
into single calls; the engine itself never spawns work or touches a real
clock. Outputs are (connection, envelope) pairs plus connections to
close, so the same engine drives live sockets, the scripted simulator,
and log replay identically.

Authority split: the server owns seats and element states (clients apply
only echoed updates); each client owns its head pose and hands, which the
server coalesces latest-wins and relays on ticks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .geometry import Pose
from .protocol import (
    ClientHello,
    ElementCommand,
    ElementStateMsg,
    Envelope,
    ErrorMsg,
    GestureEvent,
    HandUpdate,
    Leave,
    PoseUpdate,
    SeatRequest,
    SeatUpdate,
    ServerWelcome,
    accept_sequence,
    envelope,
    make_snapshot,
)
from .room import ElementState, Room

DEFAULT_TICK_HZ = 20.0

# error codes sent in ErrorMsg
ERR_ALREADY_WELCOMED = "already_welcomed"
ERR_NOT_WELCOMED = "not_welcomed"
ERR_UNKNOWN_SEAT = "unknown_seat"
ERR_UNKNOWN_ELEMENT = "unknown_element"
ERR_OUT_OF_RANGE = "out_of_range"
ERR_NOT_SEATED = "not_seated"
ERR_UNEXPECTED_TYPE = "unexpected_type"


@dataclass
class SessionInfo:
    session_id: str
    conn_id: str
    display_name: str
    seat_id: str | None = None
    last_head: Pose = field(default_factory=Pose.identity)
    last_hands: dict = field(default_factory=dict)  # "left"/"right" -> HandFrame
    last_seen_seq: dict = field(default_factory=dict)  # stream -> last seq
    head_dirty: bool = False
    dirty_hands: set = field(default_factory=set)


@dataclass
class ServerState:
    room: Room
    sessions: dict[str, SessionInfo] = field(default_factory=dict)
    seat_map: dict[str, str | None] = field(default_factory=dict)
    element_states: dict[str, ElementState] = field(default_factory=dict)
    tick_count: int = 0

    def __post_init__(self):
        if not self.seat_map:
            self.seat_map = {vp.id: None for vp in self.room.viewpoints}
        if not self.element_states:
            self.element_states = {el.id: el.state for el in self.room.elements}


@dataclass
class Effects:
    messages: list[tuple[str, Envelope]] = field(default_factory=list)
    close: list[str] = field(default_factory=list)

    def extend(self, other: "Effects"):
        self.messages.extend(other.messages)
        self.close.extend(other.close)


def state_digest(seats: dict[str, str | None], element_states: dict[str, ElementState]) -> str:
    """Stable hash of the replicated state (seat map + element states)."""
    doc = {
        "seats": {k: seats[k] for k in sorted(seats)},
        "elements": {k: element_states[k].to_dict() for k in sorted(element_states)},
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class SessionEngine:
    """One meeting room's server-side state machine."""

    def __init__(self, room: Room, tick_hz: float = DEFAULT_TICK_HZ):
        self.state = ServerState(room=room)
        self.tick_hz = tick_hz
        self.clock_ms = 0.0
        self._next_session = 1
        self._conn_session: dict[str, str] = {}
        self._out_seq: dict[str, int] = {}
        # every applied element change, per element: list of ElementState
        self.version_history: dict[str, list[ElementState]] = {
            el_id: [st] for el_id, st in self.state.element_states.items()
        }

    # --- plumbing ---------------------------------------------------------

    def _stamp(self, conn_id: str, body, session_id: str = "") -> tuple[str, Envelope]:
        seq = self._out_seq.get(conn_id, 0)
        self._out_seq[conn_id] = seq + 1
        return conn_id, envelope(body, seq=seq, session_id=session_id, ts_ms=self.clock_ms)

    def _sorted_sessions(self) -> list[SessionInfo]:
        return [self.state.sessions[sid] for sid in sorted(self.state.sessions)]

    def _broadcast(self, body, session_id: str = "", skip: str | None = None) -> list:
        return [
            self._stamp(sess.conn_id, body, session_id)
            for sess in self._sorted_sessions()
            if sess.session_id != skip
        ]

    def _session_for(self, conn_id: str) -> SessionInfo | None:
        sid = self._conn_session.get(conn_id)
        return self.state.sessions.get(sid) if sid else None

    def _error(self, conn_id: str, code: str, detail: str = "") -> tuple[str, Envelope]:
        return self._stamp(conn_id, ErrorMsg(code=code, detail=detail))

    def digest(self) -> str:
        return state_digest(self.state.seat_map, self.state.element_states)

    # --- event entry points -----------------------------------------------

    def handle(self, conn_id: str, env: Envelope) -> Effects:
        """Apply one inbound envelope; the caller defines the total order."""
        self.clock_ms = max(self.clock_ms, float(env.ts_ms))
        body = env.body
        if isinstance(body, ClientHello):
            return self.handle_hello(conn_id, body)
        session = self._session_for(conn_id)
        if session is None:
            return Effects(messages=[self._error(conn_id, ERR_NOT_WELCOMED)])
        if isinstance(body, SeatRequest):
            return self.handle_seat_request(session, body)
        if isinstance(body, ElementCommand):
            return self.handle_element_command(session, body)
        if isinstance(body, PoseUpdate):
            return self.handle_pose_update(session, env.seq, body)
        if isinstance(body, HandUpdate):
            return self.handle_hand_update(session, env.seq, body)
        if isinstance(body, GestureEvent):
            # informational only; gesture outcomes arrive as element commands
            return Effects()
        if isinstance(body, Leave):
            return self.handle_disconnect(conn_id)
        return Effects(
            messages=[self._error(conn_id, ERR_UNEXPECTED_TYPE, f"client sent {env.msg_type}")]
        )

    def handle_hello(self, conn_id: str, hello: ClientHello) -> Effects:
        if conn_id in self._conn_session:
            return Effects(
                messages=[self._error(conn_id, ERR_ALREADY_WELCOMED, "hello repeated")],
                close=[conn_id],
            )
        session_id = f"s{self._next_session:04d}"
        self._next_session += 1
        self.state.sessions[session_id] = SessionInfo(
            session_id=session_id, conn_id=conn_id, display_name=hello.display_name
        )
        self._conn_session[conn_id] = session_id
        welcome = ServerWelcome(session_id=session_id, snapshot=make_snapshot(self.state))
        return Effects(messages=[self._stamp(conn_id, welcome)])

    def handle_seat_request(self, session: SessionInfo, req: SeatRequest) -> Effects:
        state = self.state
        if req.seat_id not in state.seat_map:
            return Effects(
                messages=[self._error(session.conn_id, ERR_UNKNOWN_SEAT, req.seat_id)]
            )
        occupant = state.seat_map[req.seat_id]
        if occupant is not None and occupant != session.session_id:
            denial = SeatUpdate(session_id=session.session_id, seat_id=req.seat_id, granted=False)
            return Effects(messages=[self._stamp(session.conn_id, denial)])
        if session.seat_id is not None:
            state.seat_map[session.seat_id] = None
        state.seat_map[req.seat_id] = session.session_id
        session.seat_id = req.seat_id
        update = SeatUpdate(session_id=session.session_id, seat_id=req.seat_id, granted=True)
        return Effects(messages=self._broadcast(update))

    def handle_element_command(self, session: SessionInfo, cmd: ElementCommand) -> Effects:
        state = self.state
        if cmd.element_id not in state.element_states:
            return Effects(
                messages=[self._error(session.conn_id, ERR_UNKNOWN_ELEMENT, cmd.element_id)]
            )
        if session.seat_id is None:
            return Effects(
                messages=[self._error(session.conn_id, ERR_NOT_SEATED, "sit before commanding")]
            )
        current = state.element_states[cmd.element_id]
        slide = current.slide_index
        content = current.content_id
        if cmd.command == "next_slide":
            slide = min(slide + 1, current.slide_count - 1)
        elif cmd.command == "prev_slide":
            slide = max(slide - 1, 0)
        elif cmd.command == "set_slide":
            if not 0 <= cmd.slide < current.slide_count:
                return Effects(
                    messages=[
                        self._error(
                            session.conn_id,
                            ERR_OUT_OF_RANGE,
                            f"slide {cmd.slide} outside [0, {current.slide_count})",
                        )
                    ]
                )
            slide = cmd.slide
        elif cmd.command == "set_content":
            if cmd.content_id != content:
                content = cmd.content_id
                slide = 0
        if slide == current.slide_index and content == current.content_id:
            return Effects()  # no-op commands change nothing and broadcast nothing
        new = ElementState(
            version=current.version + 1,
            slide_index=slide,
            slide_count=current.slide_count,
            content_id=content,
        )
        state.element_states[cmd.element_id] = new
        self.version_history[cmd.element_id].append(new)
        return Effects(
            messages=self._broadcast(ElementStateMsg(element_id=cmd.element_id, state=new))
        )

    def handle_pose_update(self, session: SessionInfo, seq: int, upd: PoseUpdate) -> Effects:
        if accept_sequence(session.last_seen_seq.get("pose"), seq):
            session.last_seen_seq["pose"] = seq
            session.last_head = upd.head
            session.head_dirty = True
        return Effects()

    def handle_hand_update(self, session: SessionInfo, seq: int, upd: HandUpdate) -> Effects:
        if accept_sequence(session.last_seen_seq.get("hand"), seq):
            session.last_seen_seq["hand"] = seq
            for frame in upd.frames:
                session.last_hands[frame.hand] = frame
                session.dirty_hands.add(frame.hand)
        return Effects()

    def tick(self, now_ms: float) -> Effects:
        """Relay each seated user's pose/hands changed since the last tick."""
        self.clock_ms = max(self.clock_ms, float(now_ms))
        out = Effects()
        for owner in self._sorted_sessions():
            if owner.seat_id is None:
                continue
            if owner.head_dirty:
                relay = PoseUpdate(
                    head=owner.last_head, session_id=owner.session_id, seat_id=owner.seat_id
                )
                out.messages.extend(self._broadcast(relay, owner.session_id, skip=owner.session_id))
                owner.head_dirty = False
            if owner.dirty_hands:
                frames = tuple(
                    owner.last_hands[h] for h in sorted(owner.dirty_hands) if h in owner.last_hands
                )
                if frames:
                    relay = HandUpdate(
                        frames=frames, session_id=owner.session_id, seat_id=owner.seat_id
                    )
                    out.messages.extend(
                        self._broadcast(relay, owner.session_id, skip=owner.session_id)
                    )
                owner.dirty_hands.clear()
        self.state.tick_count += 1
        return out

    def handle_disconnect(self, conn_id: str) -> Effects:
        session = self._session_for(conn_id)
        if session is None:
            self._conn_session.pop(conn_id, None)
            return Effects(close=[conn_id])
        del self._conn_session[conn_id]
        del self.state.sessions[session.session_id]
        out = Effects(close=[conn_id])
        if session.seat_id is not None:
            self.state.seat_map[session.seat_id] = None
            update = SeatUpdate(session_id=session.session_id, seat_id=None, granted=True)
            out.messages.extend(self._broadcast(update))
        return out
