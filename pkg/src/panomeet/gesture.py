"""Gesture recognition: palm menu gating, swipe detection, gaze targeting.

All inputs live in the local seat frame (viewer at origin, -Z forward,
+X right). A swipe only turns into an element command when the head's
forward ray actually hits a display element - the gaze gate - so stray
hand motion cannot flip slides on something the user is not looking at.

Thresholds are tuned so a deliberate hand sweep fires and idle jitter
does not; every value is configurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .geometry import FORWARD, Pose, Vec3, forward_vector, invert_pose
from .protocol import ElementCommand, HandFrame
from .room import DISPLAY_KINDS, Room

SWIPE_LEFT = "swipe_left"
SWIPE_RIGHT = "swipe_right"

_RAY_EPS = 1e-9


class GestureConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GestureConfig:
    swipe_min_speed: float = 0.8  # m/s, mean lateral speed over the span
    swipe_min_duration: float = 150.0  # ms
    swipe_min_displacement: float = 0.15  # m net lateral travel
    dominance_ratio: float = 2.0  # lateral vs max(vertical, depth)
    palm_cone_half_angle: float = 30.0  # degrees
    gaze_margin: float = 0.10  # extent grows by this fraction per side
    window: float = 500.0  # ms of retained hand history

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise GestureConfigError(f"{f.name} must be positive")
        if self.dominance_ratio < 1.0:
            raise GestureConfigError("dominance_ratio must be >= 1")

    @staticmethod
    def from_dict(d: dict | None) -> "GestureConfig":
        d = d or {}
        known = {f.name for f in fields(GestureConfig)}
        unknown = set(d) - known
        if unknown:
            raise GestureConfigError(f"unknown gesture config keys: {sorted(unknown)}")
        return GestureConfig(**{k: float(v) for k, v in d.items()})


@dataclass
class GestureWindow:
    """Recent hand samples per hand plus the latest head pose."""

    config: GestureConfig = field(default_factory=GestureConfig)
    head: Pose = field(default_factory=Pose.identity)
    samples: dict[str, list[tuple[float, HandFrame]]] = field(
        default_factory=lambda: {"left": [], "right": []}
    )

    def set_head(self, head: Pose):
        self.head = head

    def push(self, ts_ms: float, frame: HandFrame):
        bucket = self.samples[frame.hand]
        if bucket and ts_ms < bucket[-1][0]:
            raise ValueError("hand samples must arrive in timestamp order")
        bucket.append((ts_ms, frame))
        cutoff = ts_ms - self.config.window
        while bucket and bucket[0][0] < cutoff:
            bucket.pop(0)

    def consume(self):
        for bucket in self.samples.values():
            bucket.clear()


def palm_faces_head(hand: HandFrame, head: Pose, cfg: GestureConfig) -> bool:
    """True iff the palm normal points at the head within the config cone.

    The palm normal is the palm orientation applied to -Z. Untracked hands
    never face anything.
    """
    if not hand.tracked:
        return False
    normal = hand.palm.orientation.rotate(FORWARD)
    offset = head.position - hand.palm.position
    if offset.norm() <= 1e-9:
        return True
    to_head = offset.normalized()
    cos_angle = max(-1.0, min(1.0, normal.dot(to_head)))
    return math.degrees(math.acos(cos_angle)) <= cfg.palm_cone_half_angle


def detect_swipe(win: GestureWindow, cfg: GestureConfig | None = None) -> str | None:
    """Look for a lateral sweep in the window; returns "swipe_left",
    "swipe_right", or None.

    Fires when some contiguous span lasting at least swipe_min_duration has
    mean lateral speed >= swipe_min_speed, net lateral displacement >=
    swipe_min_displacement, and lateral travel dominating vertical/depth by
    dominance_ratio. A firing detection consumes the window so one motion
    cannot fire twice.
    """
    cfg = cfg or win.config
    for hand in ("right", "left"):
        bucket = win.samples[hand]
        n = len(bucket)
        for j in range(1, n):
            ts_j, frame_j = bucket[j]
            for i in range(j):
                ts_i, frame_i = bucket[i]
                duration = ts_j - ts_i
                if duration < cfg.swipe_min_duration:
                    continue
                delta = frame_j.palm.position - frame_i.palm.position
                lateral = abs(delta.x)
                if lateral < cfg.swipe_min_displacement:
                    continue
                if lateral * 1000.0 / duration < cfg.swipe_min_speed:
                    continue
                if lateral < cfg.dominance_ratio * max(abs(delta.y), abs(delta.z)):
                    continue
                win.consume()
                return SWIPE_RIGHT if delta.x > 0 else SWIPE_LEFT
    return None


def gaze_target(
    head: Pose,
    room_view: list[tuple[str, Pose, tuple[float, float]]],
    cfg: GestureConfig | None = None,
) -> str | None:
    """Nearest element whose (margin-inflated) rectangle the forward ray hits.

    Each entry of room_view is (element_id, pose in the seat frame, extent).
    The rectangle is centered on the element pose, spans extent * (1 + 2 *
    gaze_margin), and lies in the plane whose normal is the element's -Z.
    Hits behind the head do not count.
    """
    cfg = cfg or GestureConfig()
    origin = head.position
    direction = forward_vector(head)
    best: tuple[float, str] | None = None
    for element_id, pose, extent in room_view:
        normal = pose.orientation.rotate(FORWARD)
        denom = normal.dot(direction)
        if abs(denom) < _RAY_EPS:
            continue  # ray parallel to the surface
        t = normal.dot(pose.position - origin) / denom
        if t <= _RAY_EPS:
            continue  # behind (or at) the head
        hit = origin + direction.scaled(t)
        local = invert_pose(pose).orientation.rotate(hit - pose.position)
        half_w = 0.5 * extent[0] * (1.0 + 2.0 * cfg.gaze_margin)
        half_h = 0.5 * extent[1] * (1.0 + 2.0 * cfg.gaze_margin)
        if abs(local.x) <= half_w and abs(local.y) <= half_h:
            if best is None or t < best[0]:
                best = (t, element_id)
    return best[1] if best else None


def dispatch(swipe: str | None, gaze: str | None, room: Room) -> ElementCommand | None:
    """Turn a detected swipe into an element command, gated on gaze.

    Swiping left (toward -X) advances slides, right goes back; only
    display elements (projector surface, TV) accept slide commands. No
    gaze, no command - that is the whole point of the gate.
    """
    if swipe is None or gaze is None:
        return None
    try:
        element = room.element(gaze)
    except KeyError:
        return None
    if element.kind not in DISPLAY_KINDS:
        return None
    command = "next_slide" if swipe == SWIPE_LEFT else "prev_slide"
    return ElementCommand(element_id=gaze, command=command)
