"""Independent oracles and fixture helpers shared across test modules.

The matrix-based pose oracle here deliberately avoids the package's
quaternion algebra: quaternions are converted to rotation matrices with
the textbook formula and everything else is plain 4x4 homogeneous-matrix
arithmetic, so it can check the quaternion path rather than mirror it.
"""

from __future__ import annotations

import math
import random

import numpy as np

from panomeet.geometry import Pose, UnitQuat, Vec3


def quat_to_matrix(q: UnitQuat) -> np.ndarray:
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def pose_to_matrix(p: Pose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix(p.orientation)
    m[:3, 3] = [p.position.x, p.position.y, p.position.z]
    return m


def matrix_apply(m: np.ndarray, v: Vec3) -> Vec3:
    out = m @ np.array([v.x, v.y, v.z, 1.0])
    return Vec3(float(out[0]), float(out[1]), float(out[2]))


def random_unit_quat(rng: random.Random) -> UnitQuat:
    # Uniform over SO(3) (Shoemake subgroup algorithm).
    u1, u2, u3 = rng.random(), rng.random(), rng.random()
    a, b = math.sqrt(1 - u1), math.sqrt(u1)
    return UnitQuat(
        a * math.sin(2 * math.pi * u2),
        a * math.cos(2 * math.pi * u2),
        b * math.sin(2 * math.pi * u3),
        b * math.cos(2 * math.pi * u3),
    )


def random_pose(rng: random.Random, span: float = 5.0) -> Pose:
    pos = Vec3(
        rng.uniform(-span, span), rng.uniform(-span, span), rng.uniform(-span, span)
    )
    return Pose(pos, random_unit_quat(rng))


def random_unit_vec(rng: random.Random) -> Vec3:
    while True:
        v = Vec3(rng.gauss(0, 1), rng.gauss(0, 1), rng.gauss(0, 1))
        if v.norm() > 1e-6:
            return v.normalized()


class EngineDriver:
    """Drives a SessionEngine directly (no transport) and mirrors every
    delivered envelope into per-connection ClientReplica instances."""

    def __init__(self, room, tick_hz: float = 20.0):
        from panomeet.replica import ClientReplica
        from panomeet.server import SessionEngine

        self.engine = SessionEngine(room, tick_hz=tick_hz)
        self.replicas: dict[str, ClientReplica] = {}
        self.closed: set[str] = set()
        self.out_log: list[tuple[str, object]] = []
        self._seq: dict[str, int] = {}
        self._replica_cls = ClientReplica
        self.now_ms = 0.0

    def _route(self, effects):
        for conn_id, env in effects.messages:
            self.out_log.append((conn_id, env))
            if conn_id in self.replicas:
                self.replicas[conn_id].apply(env)
        for conn_id in effects.close:
            self.closed.add(conn_id)
        return effects

    def send(self, conn_id: str, body, seq: int | None = None):
        from panomeet.protocol import envelope as make_env

        if seq is None:
            seq = self._seq.get(conn_id, 0)
            self._seq[conn_id] = seq + 1
        self.now_ms += 1.0
        sid = self.engine._conn_session.get(conn_id, "")
        env = make_env(body, seq=seq, session_id=sid, ts_ms=self.now_ms)
        return self._route(self.engine.handle(conn_id, env))

    def join(self, conn_id: str, display_name: str | None = None):
        from panomeet.protocol import ClientHello

        self.replicas.setdefault(conn_id, self._replica_cls())
        return self.send(conn_id, ClientHello(display_name or conn_id))

    def sit(self, conn_id: str, seat_id: str):
        from panomeet.protocol import SeatRequest

        return self.send(conn_id, SeatRequest(seat_id))

    def tick(self):
        self.now_ms += 1.0
        return self._route(self.engine.tick(self.now_ms))

    def disconnect(self, conn_id: str):
        return self._route(self.engine.handle_disconnect(conn_id))

    def session_id(self, conn_id: str) -> str | None:
        return self.engine._conn_session.get(conn_id)

    def check_seat_invariants(self):
        state = self.engine.state
        occupants = [sid for sid in state.seat_map.values() if sid is not None]
        assert len(occupants) == len(set(occupants)), "seat occupied by duplicate sessions"
        for sid in occupants:
            assert sid in state.sessions, f"seated ghost session {sid}"
        for sid, sess in state.sessions.items():
            seats = [k for k, v in state.seat_map.items() if v == sid]
            if sess.seat_id is None:
                assert seats == []
            else:
                assert seats == [sess.seat_id], f"session {sid} occupies {seats}"


def random_envelope(rng: random.Random):
    """One valid random envelope drawn over the whole message union."""
    from panomeet import protocol as pr
    from panomeet.room import ElementState

    def word():
        alphabet = "abcdefghijklmnopqrstuvwxyz_0123456789 éß漢"
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))

    def maybe(value):
        return value if rng.random() < 0.5 else None

    def state():
        count = rng.randint(1, 40)
        return ElementState(
            version=rng.randint(0, 1000),
            slide_index=rng.randint(0, count - 1),
            slide_count=count,
            content_id=word(),
        )

    def hand_frame():
        tracked = rng.random() < 0.9
        joints = tuple(
            Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(20)
        ) if tracked else ()
        return pr.HandFrame(
            hand=rng.choice(("left", "right")),
            palm=random_pose(rng, span=1.0),
            joints=joints,
            tracked=tracked,
        )

    def snapshot():
        seat_ids = [f"seat_{k}" for k in range(rng.randint(1, 4))]
        users = []
        seats = {}
        for i, sid in enumerate(seat_ids):
            occupant = f"s{i:04d}" if rng.random() < 0.5 else None
            seats[sid] = occupant
            if occupant:
                users.append(pr.SnapshotUser(occupant, word(), sid, random_pose(rng)))
        return pr.Snapshot(
            room_id=word() or "room",
            seats=seats,
            users=tuple(sorted(users, key=lambda u: u.session_id)),
            elements=tuple(pr.SnapshotElement(f"el_{k}", state()) for k in range(rng.randint(0, 3))),
        )

    def element_command():
        cmd = rng.choice(pr.ELEMENT_COMMANDS)
        return pr.ElementCommand(
            element_id=word() or "el",
            command=cmd,
            slide=rng.randint(0, 30) if cmd == "set_slide" else None,
            content_id=word() if cmd == "set_content" else None,
        )

    makers = [
        lambda: pr.ClientHello(word()),
        lambda: pr.ServerWelcome(f"s{rng.randint(0, 99):04d}", snapshot()),
        snapshot,
        lambda: pr.SeatRequest(word() or "seat"),
        lambda: pr.SeatUpdate(f"s{rng.randint(0, 99):04d}", maybe(word() or "seat"), rng.random() < 0.5),
        lambda: pr.PoseUpdate(random_pose(rng), maybe("s0001"), maybe("seat_a")),
        lambda: pr.HandUpdate(
            tuple(hand_frame() for _ in range(rng.randint(0, 2))), maybe("s0001"), maybe("seat_a")
        ),
        element_command,
        lambda: pr.ElementStateMsg(word() or "el", state()),
        lambda: pr.GestureEvent(rng.choice(pr.GESTURE_KINDS), maybe(word()), maybe(word())),
        lambda: pr.Leave(),
        lambda: pr.ErrorMsg(word() or "code", word()),
    ]
    body = rng.choice(makers)()
    return pr.envelope(
        body,
        seq=rng.randint(0, 10**6),
        session_id=rng.choice(("", f"s{rng.randint(0, 99):04d}")),
        ts_ms=rng.choice((rng.randint(0, 10**9), round(rng.uniform(0, 1e9), 3))),
    )


def assert_vec_close(a: Vec3, b: Vec3, tol: float = 1e-9):
    assert abs(a.x - b.x) <= tol and abs(a.y - b.y) <= tol and abs(a.z - b.z) <= tol, (
        f"{a} != {b}"
    )


def quat_angle_between(a: UnitQuat, b: UnitQuat) -> float:
    return a.conjugate().multiply(b).angle()


def assert_pose_close(a: Pose, b: Pose, tol: float = 1e-9):
    assert_vec_close(a.position, b.position, tol)
    assert quat_angle_between(a.orientation, b.orientation) <= max(tol, 4e-9), (
        f"orientations differ: {a.orientation} vs {b.orientation}"
    )
