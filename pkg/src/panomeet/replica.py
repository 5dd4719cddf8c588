"""Client-side mirror of the authoritative session state.

A replica applies only what the server sends (welcome snapshot, seat
updates, element-state echoes, pose/hand relays) and never invents state:
element versions in particular always come off the wire. Continuous
streams are coalesced latest-wins per owner via envelope sequence
numbers, mirroring the server's own coalescing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import Pose
from .protocol import (
    ElementStateMsg,
    Envelope,
    ErrorMsg,
    HandUpdate,
    PoseUpdate,
    SeatUpdate,
    ServerWelcome,
    Snapshot,
    accept_sequence,
)
from .room import ElementState
from .server import state_digest


@dataclass
class RemoteUser:
    session_id: str
    seat_id: str | None = None
    display_name: str | None = None  # known only when a snapshot carried it
    head: Pose = field(default_factory=Pose.identity)
    hands: dict = field(default_factory=dict)  # "left"/"right" -> HandFrame


@dataclass
class ClientReplica:
    session_id: str | None = None
    room_id: str | None = None
    seats: dict[str, str | None] = field(default_factory=dict)
    users: dict[str, RemoteUser] = field(default_factory=dict)
    element_states: dict[str, ElementState] = field(default_factory=dict)
    errors: list[ErrorMsg] = field(default_factory=list)
    denied_seats: list[str] = field(default_factory=list)
    _stream_seq: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def seat_id(self) -> str | None:
        if self.session_id is None:
            return None
        for seat, occupant in self.seats.items():
            if occupant == self.session_id:
                return seat
        return None

    def apply_snapshot(self, snap: Snapshot):
        self.room_id = snap.room_id
        self.seats = dict(snap.seats)
        self.element_states = {e.id: e.state for e in snap.elements}
        self.users = {
            u.session_id: RemoteUser(
                session_id=u.session_id,
                seat_id=u.seat_id,
                display_name=u.display_name,
                head=u.head,
            )
            for u in snap.users
        }

    def apply(self, env: Envelope):
        body = env.body
        if isinstance(body, ServerWelcome):
            self.session_id = body.session_id
            self.apply_snapshot(body.snapshot)
        elif isinstance(body, Snapshot):
            self.apply_snapshot(body)
        elif isinstance(body, SeatUpdate):
            self._apply_seat_update(body)
        elif isinstance(body, ElementStateMsg):
            self.element_states[body.element_id] = body.state
        elif isinstance(body, PoseUpdate):
            if body.session_id is not None:
                user = self._user(body.session_id, body.seat_id)
                if accept_sequence(self._stream_seq.get((body.session_id, "pose")), env.seq):
                    self._stream_seq[(body.session_id, "pose")] = env.seq
                    user.head = body.head
        elif isinstance(body, HandUpdate):
            if body.session_id is not None:
                user = self._user(body.session_id, body.seat_id)
                if accept_sequence(self._stream_seq.get((body.session_id, "hand")), env.seq):
                    self._stream_seq[(body.session_id, "hand")] = env.seq
                    for frame in body.frames:
                        user.hands[frame.hand] = frame
        elif isinstance(body, ErrorMsg):
            self.errors.append(body)

    def _apply_seat_update(self, upd: SeatUpdate):
        if not upd.granted:
            self.denied_seats.append(upd.seat_id or "")
            return
        for seat, occupant in list(self.seats.items()):
            if occupant == upd.session_id:
                self.seats[seat] = None
        if upd.seat_id is None:
            # unseated (normally a departure); drop the remote user mirror
            self.users.pop(upd.session_id, None)
            return
        self.seats[upd.seat_id] = upd.session_id
        self._user(upd.session_id, upd.seat_id)

    def _user(self, session_id: str, seat_id: str | None) -> RemoteUser:
        user = self.users.get(session_id)
        if user is None:
            user = RemoteUser(session_id=session_id)
            self.users[session_id] = user
        if seat_id is not None:
            user.seat_id = seat_id
        return user

    def digest(self) -> str:
        """Digest over the replicated seats + element states; equals the
        server's digest exactly when the replica has converged."""
        return state_digest(self.seats, self.element_states)

    def core_state(self) -> dict:
        """The replicated fields every observer must agree on, independent of
        when it joined: seat map, element states, seated users' pose data."""
        return {
            "seats": dict(sorted(self.seats.items())),
            "elements": {k: v.to_dict() for k, v in sorted(self.element_states.items())},
            "users": {
                sid: {
                    "seat_id": u.seat_id,
                    "head": u.head.to_dict(),
                    "hands": {h: f.to_dict() for h, f in sorted(u.hands.items())},
                }
                for sid, u in sorted(self.users.items())
                if u.seat_id is not None
            },
        }
