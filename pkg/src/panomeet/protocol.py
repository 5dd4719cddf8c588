"""Typed message set and newline-delimited JSON codec for session traffic.

Every message travels as one UTF-8 JSON object terminated by a single
``\\n``: ``{"msg_type": ..., "seq": ..., "session_id": ..., "ts_ms": ...,
"body": {...}}``. The same framing is used on raw TCP and inside
WebSocket text frames (one message per frame). Continuous streams (pose,
hands) are coalesced latest-wins via per-stream sequence numbers; seat
and element changes are reliable and ordered by the server.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .geometry import GeometryError, Pose, Vec3
from .room import ElementState

HANDS = ("left", "right")
JOINTS_PER_HAND = 20  # 5 fingers x 4 joints, thumb-to-pinky, proximal-to-tip

ELEMENT_COMMANDS = ("next_slide", "prev_slide", "set_slide", "set_content")
GESTURE_KINDS = ("swipe_left", "swipe_right", "menu_open", "menu_select")

DEFAULT_PORT = 7870
WEBSOCKET_PATH = "/session"


class ProtocolError(ValueError):
    """Base class for codec failures."""


class MalformedLineError(ProtocolError):
    def __init__(self, detail: str, offset: int | None = None):
        super().__init__(detail if offset is None else f"{detail} (byte offset {offset})")
        self.offset = offset


class UnknownTypeError(ProtocolError):
    def __init__(self, msg_type: str):
        super().__init__(f"unknown msg_type: {msg_type!r}")
        self.msg_type = msg_type


class SchemaViolationError(ProtocolError):
    def __init__(self, field_name: str, detail: str):
        super().__init__(f"field {field_name!r}: {detail}")
        self.field = field_name


class EncodingError(ProtocolError):
    pass


@dataclass(frozen=True)
class HandFrame:
    hand: str  # "left" | "right"
    palm: Pose  # local seat frame
    joints: tuple[Vec3, ...]  # exactly JOINTS_PER_HAND when tracked
    tracked: bool = True

    def __post_init__(self):
        if self.hand not in HANDS:
            raise SchemaViolationError("hand", f"must be one of {HANDS}")
        if self.tracked and len(self.joints) != JOINTS_PER_HAND:
            raise SchemaViolationError(
                "joints", f"tracked hand needs exactly {JOINTS_PER_HAND} joints, got {len(self.joints)}"
            )
        if not self.tracked and self.joints:
            raise SchemaViolationError("joints", "untracked hand must carry no joints")
        for j in self.joints:
            if not j.is_finite():
                raise SchemaViolationError("joints", "joint positions must be finite")

    def to_dict(self) -> dict:
        return {
            "hand": self.hand,
            "palm": self.palm.to_dict(),
            "joints": [j.as_list() for j in self.joints],
            "tracked": self.tracked,
        }

    @staticmethod
    def from_dict(d: dict) -> "HandFrame":
        joints = d.get("joints")
        if not isinstance(joints, list):
            raise SchemaViolationError("joints", "expected a list")
        return HandFrame(
            hand=_get_str(d, "hand"),
            palm=_pose_field(d, "palm"),
            joints=tuple(Vec3.from_seq(j) for j in joints),
            tracked=_get_bool(d, "tracked"),
        )


# --- message bodies -------------------------------------------------------


@dataclass(frozen=True)
class ClientHello:
    display_name: str


@dataclass(frozen=True)
class Snapshot:
    room_id: str
    seats: dict[str, str | None]  # viewpoint id -> session id or None
    users: tuple["SnapshotUser", ...]  # seated users, sorted by session_id
    elements: tuple["SnapshotElement", ...]


@dataclass(frozen=True)
class SnapshotUser:
    session_id: str
    display_name: str
    seat_id: str
    head: Pose


@dataclass(frozen=True)
class SnapshotElement:
    id: str
    state: ElementState


@dataclass(frozen=True)
class ServerWelcome:
    session_id: str
    snapshot: Snapshot


@dataclass(frozen=True)
class SeatRequest:
    seat_id: str


@dataclass(frozen=True)
class SeatUpdate:
    session_id: str
    seat_id: str | None
    granted: bool


@dataclass(frozen=True)
class PoseUpdate:
    head: Pose
    # set only on server->client relays (owner attribution)
    session_id: str | None = None
    seat_id: str | None = None


@dataclass(frozen=True)
class HandUpdate:
    frames: tuple[HandFrame, ...]
    session_id: str | None = None
    seat_id: str | None = None


@dataclass(frozen=True)
class ElementCommand:
    element_id: str
    command: str  # one of ELEMENT_COMMANDS
    slide: int | None = None  # set_slide argument
    content_id: str | None = None  # set_content argument

    def __post_init__(self):
        if self.command not in ELEMENT_COMMANDS:
            raise SchemaViolationError("command", f"must be one of {ELEMENT_COMMANDS}")
        if self.command == "set_slide" and not isinstance(self.slide, int):
            raise SchemaViolationError("slide", "set_slide needs an integer slide")
        if self.command == "set_content" and not isinstance(self.content_id, str):
            raise SchemaViolationError("content_id", "set_content needs a content_id")


@dataclass(frozen=True)
class ElementStateMsg:
    element_id: str
    state: ElementState


@dataclass(frozen=True)
class GestureEvent:
    kind: str  # one of GESTURE_KINDS
    gaze_element: str | None = None
    item: str | None = None  # menu_select payload

    def __post_init__(self):
        if self.kind not in GESTURE_KINDS:
            raise SchemaViolationError("kind", f"must be one of {GESTURE_KINDS}")


@dataclass(frozen=True)
class Leave:
    pass


@dataclass(frozen=True)
class ErrorMsg:
    code: str
    detail: str = ""


Message = (
    ClientHello
    | ServerWelcome
    | Snapshot
    | SeatRequest
    | SeatUpdate
    | PoseUpdate
    | HandUpdate
    | ElementCommand
    | ElementStateMsg
    | GestureEvent
    | Leave
    | ErrorMsg
)

MESSAGE_TYPES: dict[str, type] = {
    "client_hello": ClientHello,
    "server_welcome": ServerWelcome,
    "snapshot": Snapshot,
    "seat_request": SeatRequest,
    "seat_update": SeatUpdate,
    "pose_update": PoseUpdate,
    "hand_update": HandUpdate,
    "element_command": ElementCommand,
    "element_state_msg": ElementStateMsg,
    "gesture_event": GestureEvent,
    "leave": Leave,
    "error_msg": ErrorMsg,
}

_TYPE_TAGS = {cls: tag for tag, cls in MESSAGE_TYPES.items()}


@dataclass(frozen=True)
class Envelope:
    msg_type: str
    seq: int
    session_id: str  # empty before welcome
    ts_ms: float
    body: Message

    def __post_init__(self):
        if self.msg_type not in MESSAGE_TYPES:
            raise UnknownTypeError(self.msg_type)
        if not isinstance(self.body, MESSAGE_TYPES[self.msg_type]):
            raise SchemaViolationError("body", f"body does not match msg_type {self.msg_type!r}")
        if not isinstance(self.seq, int) or self.seq < 0:
            raise SchemaViolationError("seq", "must be a non-negative integer")
        if not math.isfinite(self.ts_ms):
            raise SchemaViolationError("ts_ms", "must be finite")


def envelope(body: Message, seq: int, session_id: str = "", ts_ms: float = 0) -> Envelope:
    return Envelope(_TYPE_TAGS[type(body)], seq, session_id, ts_ms, body)


# --- encoding -------------------------------------------------------------


def _body_to_dict(body: Message) -> dict:
    if isinstance(body, ClientHello):
        return {"display_name": body.display_name}
    if isinstance(body, ServerWelcome):
        return {"session_id": body.session_id, "snapshot": _body_to_dict(body.snapshot)}
    if isinstance(body, Snapshot):
        return {
            "room_id": body.room_id,
            "seats": dict(sorted(body.seats.items())),
            "users": [
                {
                    "session_id": u.session_id,
                    "display_name": u.display_name,
                    "seat_id": u.seat_id,
                    "head": u.head.to_dict(),
                }
                for u in body.users
            ],
            "elements": [{"id": e.id, "state": e.state.to_dict()} for e in body.elements],
        }
    if isinstance(body, SeatRequest):
        return {"seat_id": body.seat_id}
    if isinstance(body, SeatUpdate):
        return {"session_id": body.session_id, "seat_id": body.seat_id, "granted": body.granted}
    if isinstance(body, PoseUpdate):
        out = {"head": body.head.to_dict()}
        if body.session_id is not None:
            out["session_id"] = body.session_id
        if body.seat_id is not None:
            out["seat_id"] = body.seat_id
        return out
    if isinstance(body, HandUpdate):
        out = {"frames": [f.to_dict() for f in body.frames]}
        if body.session_id is not None:
            out["session_id"] = body.session_id
        if body.seat_id is not None:
            out["seat_id"] = body.seat_id
        return out
    if isinstance(body, ElementCommand):
        out = {"element_id": body.element_id, "command": body.command}
        if body.slide is not None:
            out["slide"] = body.slide
        if body.content_id is not None:
            out["content_id"] = body.content_id
        return out
    if isinstance(body, ElementStateMsg):
        return {"element_id": body.element_id, "state": body.state.to_dict()}
    if isinstance(body, GestureEvent):
        out = {"kind": body.kind, "gaze_element": body.gaze_element}
        if body.item is not None:
            out["item"] = body.item
        return out
    if isinstance(body, Leave):
        return {}
    if isinstance(body, ErrorMsg):
        return {"code": body.code, "detail": body.detail}
    raise EncodingError(f"unencodable body type {type(body).__name__}")


def encode_message(env: Envelope) -> bytes:
    """One compact JSON object plus a trailing newline; rejects non-finite
    numbers so every emitted line is strict JSON."""
    doc = {
        "msg_type": env.msg_type,
        "seq": env.seq,
        "session_id": env.session_id,
        "ts_ms": env.ts_ms,
        "body": _body_to_dict(env.body),
    }
    try:
        line = json.dumps(doc, allow_nan=False, separators=(",", ":"), sort_keys=True)
    except ValueError as exc:
        raise EncodingError(f"envelope contains non-finite numbers: {exc}") from exc
    return line.encode("utf-8") + b"\n"


# --- decoding -------------------------------------------------------------


def _get(d: dict, key: str):
    if key not in d:
        raise SchemaViolationError(key, "missing")
    return d[key]


def _get_str(d: dict, key: str) -> str:
    v = _get(d, key)
    if not isinstance(v, str):
        raise SchemaViolationError(key, "expected string")
    return v


def _get_opt_str(d: dict, key: str) -> str | None:
    v = d.get(key)
    if v is not None and not isinstance(v, str):
        raise SchemaViolationError(key, "expected string or null")
    return v


def _get_bool(d: dict, key: str) -> bool:
    v = _get(d, key)
    if not isinstance(v, bool):
        raise SchemaViolationError(key, "expected boolean")
    return v


def _get_number(d: dict, key: str) -> float:
    v = _get(d, key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaViolationError(key, "expected number")
    if not math.isfinite(v):
        raise SchemaViolationError(key, "must be finite")
    return v


def _get_int(d: dict, key: str) -> int:
    v = _get(d, key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolationError(key, "expected integer")
    return v


def _pose_field(d: dict, key: str) -> Pose:
    v = _get(d, key)
    if not isinstance(v, dict):
        raise SchemaViolationError(key, "expected pose object")
    try:
        return Pose.from_dict(v)
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise SchemaViolationError(key, f"invalid pose: {exc}") from exc


def _element_state_field(d: dict, key: str) -> ElementState:
    v = _get(d, key)
    if not isinstance(v, dict):
        raise SchemaViolationError(key, "expected state object")
    state = ElementState(
        version=_get_int(v, "version"),
        slide_index=_get_int(v, "slide_index"),
        slide_count=_get_int(v, "slide_count"),
        content_id=_get_str(v, "content_id"),
    )
    if state.version < 0:
        raise SchemaViolationError("version", "must be non-negative")
    if state.slide_count < 1:
        raise SchemaViolationError("slide_count", "must be positive")
    if not (0 <= state.slide_index < state.slide_count):
        raise SchemaViolationError("slide_index", "outside [0, slide_count)")
    return state


def _decode_snapshot(d: dict) -> Snapshot:
    seats_raw = _get(d, "seats")
    if not isinstance(seats_raw, dict):
        raise SchemaViolationError("seats", "expected object")
    seats: dict[str, str | None] = {}
    for k, v in seats_raw.items():
        if v is not None and not isinstance(v, str):
            raise SchemaViolationError("seats", f"occupant of {k!r} must be string or null")
        seats[k] = v
    users_raw = _get(d, "users")
    if not isinstance(users_raw, list):
        raise SchemaViolationError("users", "expected list")
    users = tuple(
        SnapshotUser(
            session_id=_get_str(u, "session_id"),
            display_name=_get_str(u, "display_name"),
            seat_id=_get_str(u, "seat_id"),
            head=_pose_field(u, "head"),
        )
        for u in users_raw
    )
    elements_raw = _get(d, "elements")
    if not isinstance(elements_raw, list):
        raise SchemaViolationError("elements", "expected list")
    elements = tuple(
        SnapshotElement(id=_get_str(e, "id"), state=_element_state_field(e, "state"))
        for e in elements_raw
    )
    return Snapshot(room_id=_get_str(d, "room_id"), seats=seats, users=users, elements=elements)


def _decode_body(msg_type: str, d: dict) -> Message:
    if msg_type == "client_hello":
        return ClientHello(display_name=_get_str(d, "display_name"))
    if msg_type == "server_welcome":
        snap = _get(d, "snapshot")
        if not isinstance(snap, dict):
            raise SchemaViolationError("snapshot", "expected object")
        return ServerWelcome(session_id=_get_str(d, "session_id"), snapshot=_decode_snapshot(snap))
    if msg_type == "snapshot":
        return _decode_snapshot(d)
    if msg_type == "seat_request":
        return SeatRequest(seat_id=_get_str(d, "seat_id"))
    if msg_type == "seat_update":
        return SeatUpdate(
            session_id=_get_str(d, "session_id"),
            seat_id=_get_opt_str(d, "seat_id"),
            granted=_get_bool(d, "granted"),
        )
    if msg_type == "pose_update":
        return PoseUpdate(
            head=_pose_field(d, "head"),
            session_id=_get_opt_str(d, "session_id"),
            seat_id=_get_opt_str(d, "seat_id"),
        )
    if msg_type == "hand_update":
        frames_raw = _get(d, "frames")
        if not isinstance(frames_raw, list):
            raise SchemaViolationError("frames", "expected list")
        frames = tuple(HandFrame.from_dict(f) for f in frames_raw)
        return HandUpdate(
            frames=frames,
            session_id=_get_opt_str(d, "session_id"),
            seat_id=_get_opt_str(d, "seat_id"),
        )
    if msg_type == "element_command":
        command = _get_str(d, "command")
        slide = d.get("slide")
        if slide is not None and (isinstance(slide, bool) or not isinstance(slide, int)):
            raise SchemaViolationError("slide", "expected integer")
        return ElementCommand(
            element_id=_get_str(d, "element_id"),
            command=command,
            slide=slide,
            content_id=_get_opt_str(d, "content_id"),
        )
    if msg_type == "element_state_msg":
        return ElementStateMsg(
            element_id=_get_str(d, "element_id"), state=_element_state_field(d, "state")
        )
    if msg_type == "gesture_event":
        return GestureEvent(
            kind=_get_str(d, "kind"),
            gaze_element=_get_opt_str(d, "gaze_element"),
            item=_get_opt_str(d, "item"),
        )
    if msg_type == "leave":
        return Leave()
    if msg_type == "error_msg":
        return ErrorMsg(code=_get_str(d, "code"), detail=_get_str(d, "detail"))
    raise UnknownTypeError(msg_type)


def _reject_constant(name: str):
    raise MalformedLineError(f"non-finite JSON constant {name!r} not allowed")


def decode_message(line: bytes | str) -> Envelope:
    """Decode and validate one line. Raises MalformedLineError,
    UnknownTypeError, or SchemaViolationError (naming the field)."""
    if isinstance(line, bytes):
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedLineError("invalid UTF-8", offset=exc.start) from exc
    else:
        text = line
    text = text.strip("\r\n")
    if not text:
        raise MalformedLineError("empty line")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedLineError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise MalformedLineError("top level must be an object")

    msg_type = _get_str(doc, "msg_type")
    if msg_type not in MESSAGE_TYPES:
        raise UnknownTypeError(msg_type)
    seq = _get_int(doc, "seq")
    if seq < 0:
        raise SchemaViolationError("seq", "must be non-negative")
    session_id = _get_str(doc, "session_id")
    ts_ms = _get_number(doc, "ts_ms")
    body_raw = _get(doc, "body")
    if not isinstance(body_raw, dict):
        raise SchemaViolationError("body", "expected object")
    body = _decode_body(msg_type, body_raw)
    return Envelope(msg_type=msg_type, seq=seq, session_id=session_id, ts_ms=ts_ms, body=body)


def split_stream(data: bytes) -> tuple[list[bytes], bytes]:
    """Split a byte stream into complete lines plus the unterminated tail."""
    parts = data.split(b"\n")
    return [p for p in parts[:-1]], parts[-1]


def accept_sequence(last_seen: int | None, seq: int) -> bool:
    """Latest-wins coalescing: accept iff strictly newer than the last seen.

    Gaps are fine; continuous streams are lossy by design.
    """
    return last_seen is None or seq > last_seen


def make_snapshot(state) -> Snapshot:
    """Full authoritative state for late joiners.

    ``state`` is the server engine's state (duck-typed: room, sessions,
    seat_map, element_states). Users are the seated sessions, sorted by
    session id so snapshots are insensitive to join order.
    """
    users = []
    for sid in sorted(state.sessions):
        sess = state.sessions[sid]
        if sess.seat_id is not None:
            users.append(
                SnapshotUser(
                    session_id=sid,
                    display_name=sess.display_name,
                    seat_id=sess.seat_id,
                    head=sess.last_head,
                )
            )
    elements = tuple(
        SnapshotElement(id=el.id, state=state.element_states[el.id]) for el in state.room.elements
    )
    return Snapshot(
        room_id=state.room.room_id,
        seats={vp.id: state.seat_map.get(vp.id) for vp in state.room.viewpoints},
        users=tuple(users),
        elements=elements,
    )
