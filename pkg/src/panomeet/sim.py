"""Deterministic multi-client simulation on a virtual clock.

A scenario scripts several clients against an in-process server. Every
delivery (either direction) is delayed by latency plus seeded uniform
jitter, clamped so a connection never reorders its own messages, which
is how a reliable ordered transport behaves. Nothing reads a wall
clock, so a scenario plus a seed reproduces the exact same event order,
metrics, and event log every time.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .eventlog import EventLogWriter
from .gesture import GestureConfig, GestureWindow, detect_swipe, dispatch, gaze_target
from .geometry import Pose, Vec3
from .protocol import (
    ClientHello,
    ElementCommand,
    ElementStateMsg,
    Envelope,
    HandFrame,
    HandUpdate,
    Leave,
    PoseUpdate,
    SeatRequest,
    SeatUpdate,
    encode_message,
    envelope as make_envelope,
)
from .replica import ClientReplica
from .room import Room, element_pose_in_viewpoint, load_manifest
from .server import DEFAULT_TICK_HZ, SessionEngine

ACTIONS = ("join", "sit", "move_head", "play_hand_trajectory", "command", "swipe", "leave")

# synthesized swipe trajectory: comfortably above every detection threshold
_SWIPE_SPEED = 1.5  # m/s
_SWIPE_DURATION_MS = 200.0
_SWIPE_STEP_MS = 20.0


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkModel:
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ScenarioError("latency_ms and jitter_ms must be >= 0")


@dataclass(frozen=True)
class ScenarioAction:
    at_ms: float
    kind: str
    seat_id: str | None = None
    pose: Pose | None = None
    file: str | None = None
    element_id: str | None = None
    command: str | None = None
    slide: int | None = None
    content_id: str | None = None
    direction: str | None = None


@dataclass(frozen=True)
class ScenarioClient:
    name: str
    actions: tuple[ScenarioAction, ...]


@dataclass(frozen=True)
class Scenario:
    room: Room
    network: NetworkModel
    clients: tuple[ScenarioClient, ...]
    gesture: GestureConfig
    trajectories: dict[str, tuple[tuple[float, HandFrame], ...]]  # file -> samples
    tick_hz: float = DEFAULT_TICK_HZ


@dataclass
class MetricsReport:
    seed: int
    final_digest: str
    element_convergence_ms: dict[str, float | None]
    max_divergence_ms: float
    message_counts: dict[str, dict[str, int]]
    seat_denials: int
    commands: list[dict]
    horizon_ms: float

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "final_digest": self.final_digest,
            "element_convergence_ms": self.element_convergence_ms,
            "max_divergence_ms": self.max_divergence_ms,
            "message_counts": self.message_counts,
            "seat_denials": self.seat_denials,
            "commands": self.commands,
            "horizon_ms": self.horizon_ms,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def load_trajectory(path: Path) -> tuple[tuple[float, HandFrame], ...]:
    doc = json.loads(path.read_text(encoding="utf-8"))
    hand = doc.get("hand")
    samples = []
    last_t = -1.0
    for i, raw in enumerate(doc.get("samples", [])):
        t = float(raw["t_ms"])
        if t < last_t:
            raise ScenarioError(f"{path}: sample {i} goes back in time")
        last_t = t
        frame = HandFrame.from_dict(
            {
                "hand": hand,
                "palm": raw["palm"],
                "joints": raw.get("joints", []),
                "tracked": raw.get("tracked", True),
            }
        )
        samples.append((t, frame))
    if not samples:
        raise ScenarioError(f"{path}: trajectory has no samples")
    return tuple(samples)


def parse_scenario(text: str, base_dir: str | Path) -> Scenario:
    base = Path(base_dir)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario syntax error: {exc.msg} (line {exc.lineno})") from exc
    if "manifest" not in doc:
        raise ScenarioError("scenario needs a manifest path")
    room = load_manifest(base / doc["manifest"])
    net_raw = doc.get("network", {})
    network = NetworkModel(
        latency_ms=float(net_raw.get("latency_ms", 0.0)),
        jitter_ms=float(net_raw.get("jitter_ms", 0.0)),
        seed=int(net_raw.get("seed", 0)),
    )
    gesture = GestureConfig.from_dict(doc.get("gesture"))
    tick_hz = float(doc.get("tick_hz", DEFAULT_TICK_HZ))

    trajectories: dict[str, tuple] = {}
    clients = []
    names = set()
    for c_raw in doc.get("clients", []):
        name = c_raw.get("name")
        if not name or name in names:
            raise ScenarioError(f"client names must be unique and non-empty: {name!r}")
        names.add(name)
        actions = []
        last_at = -1.0
        joined = False
        left = False
        for i, a_raw in enumerate(c_raw.get("actions", [])):
            where = f"client {name!r} action {i}"
            kind = a_raw.get("action")
            if kind not in ACTIONS:
                raise ScenarioError(f"{where}: unknown action {kind!r}")
            at_ms = float(a_raw.get("at_ms", 0.0))
            if at_ms < last_at:
                raise ScenarioError(f"{where}: at_ms decreases")
            last_at = at_ms
            if left:
                raise ScenarioError(f"{where}: action after leave")
            if kind == "join":
                joined = True
            elif not joined:
                raise ScenarioError(f"{where}: {kind} before join")
            action = ScenarioAction(
                at_ms=at_ms,
                kind=kind,
                seat_id=a_raw.get("seat_id"),
                pose=Pose.from_dict(a_raw["pose"]) if "pose" in a_raw else None,
                file=a_raw.get("file"),
                element_id=a_raw.get("element_id"),
                command=a_raw.get("command"),
                slide=a_raw.get("slide"),
                content_id=a_raw.get("content_id"),
                direction=a_raw.get("direction"),
            )
            if kind == "sit":
                if not action.seat_id or not room.has_viewpoint(action.seat_id):
                    raise ScenarioError(f"{where}: unknown seat {action.seat_id!r}")
            elif kind == "move_head" and action.pose is None:
                raise ScenarioError(f"{where}: move_head needs a pose")
            elif kind == "command":
                if not action.element_id or not room.has_element(action.element_id):
                    raise ScenarioError(f"{where}: unknown element {action.element_id!r}")
                ElementCommand(  # validates command/args
                    action.element_id, action.command or "", action.slide, action.content_id
                )
            elif kind == "swipe":
                if action.direction not in ("left", "right"):
                    raise ScenarioError(f"{where}: direction must be left or right")
            elif kind == "play_hand_trajectory":
                if not action.file:
                    raise ScenarioError(f"{where}: needs a file")
                if action.file not in trajectories:
                    traj_path = base / action.file
                    if not traj_path.is_file():
                        raise ScenarioError(f"{where}: no such trajectory file {action.file!r}")
                    trajectories[action.file] = load_trajectory(traj_path)
            elif kind == "leave":
                left = True
            actions.append(action)
        clients.append(ScenarioClient(name=name, actions=tuple(actions)))
    if not clients:
        raise ScenarioError("scenario has no clients")
    return Scenario(
        room=room,
        network=network,
        clients=tuple(clients),
        gesture=gesture,
        trajectories=trajectories,
        tick_hz=tick_hz,
    )


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), p.parent)


def _swipe_samples(direction: str) -> list[tuple[float, HandFrame]]:
    sign = -1.0 if direction == "left" else 1.0
    travel = _SWIPE_SPEED * _SWIPE_DURATION_MS / 1000.0
    start = Vec3(-sign * travel / 2.0, -0.2, -0.45)
    samples = []
    t = 0.0
    while t <= _SWIPE_DURATION_MS:
        pos = start + Vec3(sign * _SWIPE_SPEED * t / 1000.0, 0.0, 0.0)
        palm = Pose(pos, Pose.identity().orientation)
        joints = tuple(pos + Vec3(0.0, 0.0, -0.02 - 0.005 * k) for k in range(20))
        samples.append((t, HandFrame(hand="right", palm=palm, joints=joints, tracked=True)))
        t += _SWIPE_STEP_MS
    return samples


class _SimClient:
    def __init__(self, name: str, gesture_cfg: GestureConfig):
        self.name = name
        self.replica = ClientReplica()
        self.window = GestureWindow(config=gesture_cfg)
        self.head = Pose.identity()
        self.seq = 0
        self.left = False

    @property
    def live(self) -> bool:
        return self.replica.session_id is not None and not self.left

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq - 1


class _Network:
    def __init__(self, model: NetworkModel):
        self.model = model
        self.rng = random.Random(model.seed)
        self.last_arrival: dict[tuple[str, str], float] = {}

    def arrival(self, direction: str, conn: str, now: float) -> float:
        jitter = self.rng.uniform(-self.model.jitter_ms, self.model.jitter_ms)
        delay = max(0.0, self.model.latency_ms + jitter)
        t = now + delay
        key = (direction, conn)
        t = max(t, self.last_arrival.get(key, 0.0))
        self.last_arrival[key] = t
        return t


def run_scenario(scenario: Scenario, log_path: str | Path | None = None) -> MetricsReport:
    room = scenario.room
    engine = SessionEngine(room, tick_hz=scenario.tick_hz)
    net = _Network(scenario.network)
    writer = EventLogWriter(log_path, room) if log_path else None
    clients = {c.name: _SimClient(c.name, scenario.gesture) for c in scenario.clients}
    closed_conns: set[str] = set()

    heap: list[tuple[float, int, str, tuple]] = []
    counter = 0

    def push(t: float, kind: str, data: tuple):
        nonlocal counter
        heapq.heappush(heap, (t, counter, kind, data))
        counter += 1

    # expand the full client emission schedule up front so the horizon is known
    max_emission = 0.0
    for sc in scenario.clients:
        for action in sc.actions:
            push(action.at_ms, "action", (sc.name, action))
            end = action.at_ms
            if action.kind == "swipe":
                end += _SWIPE_DURATION_MS + _SWIPE_STEP_MS
            elif action.kind == "play_hand_trajectory":
                end += scenario.trajectories[action.file][-1][0]
            max_emission = max(max_emission, end)
    flush = scenario.network.latency_ms + scenario.network.jitter_ms
    tick_period = 1000.0 / scenario.tick_hz
    horizon = max_emission + 2.0 * flush + 3.0 * tick_period + 10.0
    t = tick_period
    while t <= horizon:
        push(t, "tick", ())
        t += tick_period

    # metrics state
    msg_in: dict[str, int] = {}
    msg_out: dict[str, int] = {}
    seat_denials = 0
    pending_cmds: dict[tuple[str, int], float] = {}  # (element, version) -> accept time
    finished_cmds: list[dict] = []
    out_since: dict[str, float] = {}
    max_divergence = 0.0

    def live_replicas():
        return [c for c in clients.values() if c.live]

    def update_convergence(now: float):
        for (el, ver), accepted in list(pending_cmds.items()):
            live = live_replicas()
            if all(
                c.replica.element_states.get(el) is not None
                and c.replica.element_states[el].version >= ver
                for c in live
            ):
                finished_cmds.append(
                    {
                        "element": el,
                        "version": ver,
                        "accept_ms": accepted,
                        "converged_ms": now - accepted,
                    }
                )
                del pending_cmds[(el, ver)]

    def update_divergence(now: float):
        nonlocal max_divergence
        server_digest = engine.digest()
        for c in clients.values():
            name = c.name
            if not c.live:
                if name in out_since:
                    max_divergence = max(max_divergence, now - out_since.pop(name))
                continue
            in_sync = c.replica.digest() == server_digest
            if in_sync and name in out_since:
                max_divergence = max(max_divergence, now - out_since.pop(name))
            elif not in_sync and name not in out_since:
                out_since[name] = now

    def send_to_server(client: _SimClient, body, now: float):
        env = make_envelope(
            body,
            seq=client.next_seq(),
            session_id=client.replica.session_id or "",
            ts_ms=now,
        )
        push(net.arrival("up", client.name, now), "deliver_server", (client.name, env))

    def route_effects(effects, now: float):
        nonlocal seat_denials
        for conn_id, env in effects.messages:
            msg_out[env.msg_type] = msg_out.get(env.msg_type, 0) + 1
            if isinstance(env.body, SeatUpdate) and not env.body.granted:
                seat_denials += 1
            if isinstance(env.body, ElementStateMsg):
                key = (env.body.element_id, env.body.state.version)
                if key not in pending_cmds and not any(
                    c["element"] == key[0] and c["version"] == key[1] for c in finished_cmds
                ):
                    pending_cmds[key] = now
            if writer:
                writer.log_out(conn_id, encode_message(env))
            push(net.arrival("down", conn_id, now), "deliver_client", (conn_id, env))
        for conn_id in effects.close:
            closed_conns.add(conn_id)

    def run_action(client: _SimClient, action: ScenarioAction, now: float):
        if action.kind == "join":
            send_to_server(client, ClientHello(client.name), now)
        elif action.kind == "sit":
            send_to_server(client, SeatRequest(action.seat_id), now)
        elif action.kind == "move_head":
            client.head = action.pose
            client.window.set_head(action.pose)
            send_to_server(client, PoseUpdate(head=action.pose), now)
        elif action.kind == "command":
            send_to_server(
                client,
                ElementCommand(
                    action.element_id, action.command, action.slide, action.content_id
                ),
                now,
            )
        elif action.kind == "play_hand_trajectory":
            for t_off, frame in scenario.trajectories[action.file]:
                push(now + t_off, "hand_sample", (client.name, frame, False))
        elif action.kind == "swipe":
            for t_off, frame in _swipe_samples(action.direction):
                push(now + t_off, "hand_sample", (client.name, frame, True))
            push(now + _SWIPE_DURATION_MS + _SWIPE_STEP_MS, "swipe_eval", (client.name,))
        elif action.kind == "leave":
            send_to_server(client, Leave(), now)
            client.left = True

    def run_swipe_eval(client: _SimClient, now: float):
        swipe = detect_swipe(client.window)
        seat = client.replica.seat_id
        gaze = None
        if seat is not None:
            view = [
                (el.id, element_pose_in_viewpoint(room, seat, el.id), el.extent)
                for el in room.elements
            ]
            gaze = gaze_target(client.head, view, scenario.gesture)
        cmd = dispatch(swipe, gaze, room)
        if cmd is not None:
            send_to_server(client, cmd, now)

    while heap:
        now, _, kind, data = heapq.heappop(heap)
        if kind == "action":
            name, action = data
            run_action(clients[name], action, now)
        elif kind == "hand_sample":
            name, frame, into_window = data
            client = clients[name]
            if not client.left:
                if into_window:
                    client.window.push(now, frame)
                send_to_server(client, HandUpdate(frames=(frame,)), now)
        elif kind == "swipe_eval":
            (name,) = data
            if not clients[name].left:
                run_swipe_eval(clients[name], now)
        elif kind == "deliver_server":
            conn_id, env = data
            if conn_id in closed_conns:
                continue
            msg_in[env.msg_type] = msg_in.get(env.msg_type, 0) + 1
            if writer:
                writer.log_in(conn_id, encode_message(env))
            route_effects(engine.handle(conn_id, env), now)
        elif kind == "tick":
            if writer:
                writer.log_tick(now)
            route_effects(engine.tick(now), now)
        elif kind == "deliver_client":
            conn_id, env = data
            client = clients.get(conn_id)
            if client is not None and not client.left:
                client.replica.apply(env)
        update_convergence(now)
        update_divergence(now)

    for name, since in out_since.items():
        max_divergence = max(max_divergence, horizon - since)
    if writer:
        writer.close()

    per_element: dict[str, float | None] = {el.id: None for el in room.elements}
    for cmd in finished_cmds:
        prev = per_element.get(cmd["element"])
        per_element[cmd["element"]] = max(prev or 0.0, cmd["converged_ms"])
    finished_cmds.sort(key=lambda c: (c["accept_ms"], c["element"], c["version"]))
    return MetricsReport(
        seed=scenario.network.seed,
        final_digest=engine.digest(),
        element_convergence_ms=per_element,
        max_divergence_ms=max_divergence,
        message_counts={"in": dict(sorted(msg_in.items())), "out": dict(sorted(msg_out.items()))},
        seat_denials=seat_denials,
        commands=finished_cmds,
        horizon_ms=horizon,
    )
