"""Room manifest: viewpoints (seats), shared elements, and per-seat queries.

A manifest is a UTF-8 JSON document (conventionally `*.room.json`):

    {"room_id": str,
     "viewpoints": [{"id": str, "seat_label": str, "image": str,
                     "pose": {"pos": [x,y,z], "quat": [w,x,y,z]}}],
     "elements": [{"id": str, "kind": "projector_surface"|"tv"|"custom",
                   "pose": {...}, "extent": [w,h],
                   "slide_count": int, "content_id": str}]}

All poses are in the room frame; quaternions are serialized w-first.
Rooms are immutable after parsing; the live element state (versions,
current slide) is owned by the server module, this one only carries the
initial values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .geometry import Pose, to_viewpoint_frame

ELEMENT_KINDS = ("projector_surface", "tv", "custom")

# Display elements a gaze-gated slide command may target.
DISPLAY_KINDS = ("projector_surface", "tv")


class ManifestError(ValueError):
    """Manifest is syntactically or structurally unusable."""


class UnknownIdError(KeyError):
    def __init__(self, kind: str, id_: str):
        super().__init__(id_)
        self.kind = kind
        self.id = id_

    def __str__(self):
        return f"unknown {self.kind} id: {self.id!r}"


@dataclass(frozen=True)
class ElementState:
    version: int = 0
    slide_index: int = 0
    slide_count: int = 1
    content_id: str = ""

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "slide_index": self.slide_index,
            "slide_count": self.slide_count,
            "content_id": self.content_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "ElementState":
        return ElementState(
            int(d["version"]), int(d["slide_index"]), int(d["slide_count"]), str(d["content_id"])
        )


@dataclass(frozen=True)
class Viewpoint:
    id: str
    seat_label: str
    image_ref: str
    pose: Pose


@dataclass(frozen=True)
class SharedElement:
    id: str
    kind: str
    pose: Pose  # orientation's -Z is the surface normal facing the room
    extent: tuple[float, float]  # width, height in meters
    state: ElementState = field(default_factory=ElementState)


@dataclass(frozen=True)
class Room:
    room_id: str
    viewpoints: tuple[Viewpoint, ...]
    elements: tuple[SharedElement, ...]

    def viewpoint(self, vp_id: str) -> Viewpoint:
        for vp in self.viewpoints:
            if vp.id == vp_id:
                return vp
        raise UnknownIdError("viewpoint", vp_id)

    def element(self, el_id: str) -> SharedElement:
        for el in self.elements:
            if el.id == el_id:
                return el
        raise UnknownIdError("element", el_id)

    def has_viewpoint(self, vp_id: str) -> bool:
        return any(vp.id == vp_id for vp in self.viewpoints)

    def has_element(self, el_id: str) -> bool:
        return any(el.id == el_id for el in self.elements)


@dataclass(frozen=True)
class Violation:
    level: str  # "ERROR" | "WARNING"
    code: str
    detail: str

    def __str__(self):
        return f"{self.level}: {self.code}: {self.detail}"


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ManifestError(f"{where}: missing field {key!r}")
    return d[key]


def _parse_pose(d, where: str) -> Pose:
    if not isinstance(d, dict):
        raise ManifestError(f"{where}: pose must be an object")
    pos = _require(d, "pos", where)
    quat = _require(d, "quat", where)
    if not (isinstance(pos, list) and len(pos) == 3):
        raise ManifestError(f"{where}.pos: expected 3 numbers")
    if not (isinstance(quat, list) and len(quat) == 4):
        raise ManifestError(f"{where}.quat: expected 4 numbers (w first)")
    try:
        return Pose.from_dict({"pos": pos, "quat": quat})
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"{where}: invalid pose: {exc}") from exc


def parse_manifest(text: str) -> Room:
    """Parse manifest text into a Room, applying state defaults
    (version = 0, slide_index = 0)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest syntax error at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest root must be an object")

    room_id = _require(doc, "room_id", "manifest")
    raw_vps = _require(doc, "viewpoints", "manifest")
    raw_els = doc.get("elements", [])
    if not isinstance(raw_vps, list) or not raw_vps:
        raise ManifestError("manifest.viewpoints: need at least one viewpoint")
    if not isinstance(raw_els, list):
        raise ManifestError("manifest.elements: must be a list")

    viewpoints = []
    seen = set()
    for i, raw in enumerate(raw_vps):
        where = f"viewpoints[{i}]"
        vp_id = str(_require(raw, "id", where))
        if vp_id in seen:
            raise ManifestError(f"duplicate viewpoint id: {vp_id!r}")
        seen.add(vp_id)
        viewpoints.append(
            Viewpoint(
                id=vp_id,
                seat_label=str(_require(raw, "seat_label", where)),
                image_ref=str(_require(raw, "image", where)),
                pose=_parse_pose(_require(raw, "pose", where), f"{where}.pose"),
            )
        )

    elements = []
    seen = set()
    for i, raw in enumerate(raw_els):
        where = f"elements[{i}]"
        el_id = str(_require(raw, "id", where))
        if el_id in seen:
            raise ManifestError(f"duplicate element id: {el_id!r}")
        seen.add(el_id)
        kind = str(_require(raw, "kind", where))
        if kind not in ELEMENT_KINDS:
            raise ManifestError(f"{where}.kind: {kind!r} not one of {ELEMENT_KINDS}")
        extent = _require(raw, "extent", where)
        if not (isinstance(extent, list) and len(extent) == 2):
            raise ManifestError(f"{where}.extent: expected [width, height]")
        slide_count = _require(raw, "slide_count", where)
        if not isinstance(slide_count, int) or isinstance(slide_count, bool):
            raise ManifestError(f"{where}.slide_count: expected integer")
        elements.append(
            SharedElement(
                id=el_id,
                kind=kind,
                pose=_parse_pose(_require(raw, "pose", where), f"{where}.pose"),
                extent=(float(extent[0]), float(extent[1])),
                state=ElementState(
                    version=0,
                    slide_index=0,
                    slide_count=slide_count,
                    content_id=str(_require(raw, "content_id", where)),
                ),
            )
        )

    return Room(room_id=str(room_id), viewpoints=tuple(viewpoints), elements=tuple(elements))


def load_manifest(path: str | Path) -> Room:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def serialize_manifest(room: Room) -> str:
    doc = {
        "room_id": room.room_id,
        "viewpoints": [
            {
                "id": vp.id,
                "seat_label": vp.seat_label,
                "image": vp.image_ref,
                "pose": vp.pose.to_dict(),
            }
            for vp in room.viewpoints
        ],
        "elements": [
            {
                "id": el.id,
                "kind": el.kind,
                "pose": el.pose.to_dict(),
                "extent": [el.extent[0], el.extent[1]],
                "slide_count": el.state.slide_count,
                "content_id": el.state.content_id,
            }
            for el in room.elements
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def save_manifest(room: Room, path: str | Path):
    Path(path).write_text(serialize_manifest(room), encoding="utf-8")


def with_viewpoint_poses(room: Room, poses: dict[str, Pose]) -> Room:
    """Copy of the room with the given viewpoint poses substituted."""
    vps = tuple(
        replace(vp, pose=poses[vp.id]) if vp.id in poses else vp for vp in room.viewpoints
    )
    return replace(room, viewpoints=vps)


def _image_size(path: Path):
    from PIL import Image

    with Image.open(path) as img:
        return img.size


def validate_room(room: Room, base_dir: str | Path | None = None) -> list[Violation]:
    """Collect invariant violations; empty list means the room is valid.

    When base_dir is given and a referenced image file exists there, its
    aspect ratio is checked against the 2:1 equirectangular convention
    (WARNING only). Missing files are skipped so headless setups validate.
    """
    out: list[Violation] = []
    if not room.viewpoints:
        out.append(Violation("ERROR", "no_viewpoints", "room has no viewpoints"))

    seen: set[str] = set()
    for vp in room.viewpoints:
        if vp.id in seen:
            out.append(Violation("ERROR", "duplicate_id", f"viewpoint id {vp.id!r} appears twice"))
        seen.add(vp.id)
        if not vp.image_ref:
            out.append(Violation("ERROR", "empty_image_ref", f"viewpoint {vp.id!r} has no image"))
        elif base_dir is not None:
            path = Path(base_dir) / vp.image_ref
            if path.is_file():
                w, h = _image_size(path)
                if w != 2 * h:
                    out.append(
                        Violation(
                            "WARNING",
                            "aspect_ratio",
                            f"viewpoint {vp.id!r} image is {w}x{h}, expected 2:1 equirectangular",
                        )
                    )

    seen = set()
    for el in room.elements:
        if el.id in seen:
            out.append(Violation("ERROR", "duplicate_id", f"element id {el.id!r} appears twice"))
        seen.add(el.id)
        if el.extent[0] <= 0 or el.extent[1] <= 0:
            out.append(
                Violation("ERROR", "non_positive_extent", f"element {el.id!r} extent {el.extent}")
            )
        st = el.state
        if st.slide_count < 1:
            out.append(
                Violation("ERROR", "bad_slide_count", f"element {el.id!r} slide_count {st.slide_count}")
            )
        elif not (0 <= st.slide_index < st.slide_count):
            out.append(
                Violation(
                    "ERROR",
                    "slide_index_range",
                    f"element {el.id!r} slide_index {st.slide_index} outside [0, {st.slide_count})",
                )
            )
        if st.version < 0:
            out.append(Violation("ERROR", "negative_version", f"element {el.id!r}"))
    return out


def element_pose_in_viewpoint(room: Room, vp_id: str, el_id: str) -> Pose:
    """Pose of a shared element in the given seat's local frame."""
    vp = room.viewpoint(vp_id)
    el = room.element(el_id)
    return to_viewpoint_frame(vp.pose, el.pose)


def viewpoint_pose_in_viewpoint(room: Room, observer_id: str, other_id: str) -> Pose:
    """Pose of one seat in another seat's local frame (remote avatar placement)."""
    observer = room.viewpoint(observer_id)
    other = room.viewpoint(other_id)
    return to_viewpoint_frame(observer.pose, other.pose)
