#!/usr/bin/env python3
"""Generate cross-language placement fixtures for the web viewer tests.

Expected values come from the Python geometry module (itself checked
against an independent matrix oracle), so the TypeScript port must agree
with the exact same numbers.
"""

import json
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from panomeet.geometry import (  # noqa: E402
    Pose,
    Vec3,
    compose_pose,
    dir_to_equirect,
    forward_vector,
    invert_pose,
    rot_x,
    rot_y,
    to_viewpoint_frame,
    transform_point,
)
from panomeet.room import element_pose_in_viewpoint, load_manifest  # noqa: E402

OUT = Path(__file__).resolve().parents[1] / "frontend" / "tests" / "fixtures"
DEG = math.pi / 180.0


def pose_json(p: Pose):
    return p.to_dict()


def project(point: Vec3, yaw: float, pitch: float, fov_y_deg: float, width: float, height: float):
    """Reference screen projection used by the viewer overlays."""
    cam = rot_y(yaw).multiply(rot_x(pitch))
    local = cam.conjugate().rotate(point)
    if local.z >= -1e-9:
        return None
    tan_y = math.tan(0.5 * fov_y_deg * DEG)
    tan_x = tan_y * (width / height)
    x_ndc = (local.x / -local.z) / tan_x
    y_ndc = (local.y / -local.z) / tan_y
    return [(x_ndc + 1) / 2 * width, (1 - y_ndc) / 2 * height]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    room = load_manifest(Path(__file__).resolve().parents[1] / "tests/fixtures/meeting4.room.json")

    frame_cases = []

    def frame_case(name, viewer, entity):
        frame_cases.append(
            {
                "name": name,
                "viewer": pose_json(viewer),
                "entity": pose_json(entity),
                "local": pose_json(to_viewpoint_frame(viewer, entity)),
            }
        )

    frame_case("identity", Pose.identity(), Pose(Vec3(1, 2, -3), rot_y(40 * DEG)))
    frame_case("translation", Pose.from_translation(2, 0, 0), Pose.from_translation(3, 0, 0))
    frame_case(
        "yawed_viewer", Pose(Vec3(0, 0, 0), rot_y(90 * DEG)), Pose.from_translation(0, 0, -1)
    )
    for vp_id in ("seat_a", "seat_b"):
        vp = room.viewpoint(vp_id)
        for el in room.elements:
            frame_case(f"{vp_id}->{el.id}", vp.pose, el.pose)
    frame_case(
        "seat_b->seat_a", room.viewpoint("seat_b").pose, room.viewpoint("seat_a").pose
    )

    compose_cases = []
    a = Pose(Vec3(1, 0.5, -2), rot_y(30 * DEG))
    b = Pose(Vec3(0, 1, 0), rot_x(-45 * DEG))
    compose_cases.append(
        {
            "a": pose_json(a),
            "b": pose_json(b),
            "composed": pose_json(compose_pose(a, b)),
            "a_inverse": pose_json(invert_pose(a)),
            "a_transform_point": transform_point(a, Vec3(0.25, -0.5, 1)).as_list(),
        }
    )

    forward_cases = [
        {"pose": pose_json(Pose.identity()), "forward": [0, 0, -1]},
        {"pose": pose_json(Pose(Vec3(0, 0, 0), rot_y(90 * DEG))), "forward": forward_vector(Pose(Vec3(0, 0, 0), rot_y(90 * DEG))).as_list()},
        {"pose": pose_json(Pose(Vec3(0, 0, 0), rot_x(90 * DEG))), "forward": forward_vector(Pose(Vec3(0, 0, 0), rot_x(90 * DEG))).as_list()},
    ]

    equirect_cases = []
    for d in [Vec3(0, 0, -1), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0.5, 0.5, -0.5)]:
        u, v = dir_to_equirect(d)
        equirect_cases.append({"dir": d.as_list(), "uv": [u, v]})

    projection_cases = []

    def projection_case(name, point, yaw, pitch, fov=75.0, w=800.0, h=600.0):
        projection_cases.append(
            {
                "name": name,
                "point": point.as_list(),
                "yaw": yaw,
                "pitch": pitch,
                "fov_y_deg": fov,
                "viewport": [w, h],
                "screen": project(point, yaw, pitch, fov, w, h),
            }
        )

    # element dead ahead lands dead center
    projection_case("dead_ahead_center", Vec3(0, 0, -2), 0.0, 0.0)
    # quad corners of a 1x1 element at (0,0,-2)
    el_pose = Pose(Vec3(0, 0, -2), rot_y(180 * DEG))
    for i, (sx, sy) in enumerate([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]):
        projection_case(
            f"corner_{i}", transform_point(el_pose, Vec3(sx, sy, 0)), 0.0, 0.0
        )
    # remote user exactly 90 degrees to the right: off-camera when looking
    # forward, dead center after yawing the view 90 degrees right
    projection_case("remote_right_yawed", Vec3(2, 0, 0), -math.pi / 2, 0.0)
    projection_case("remote_right_hidden", Vec3(2, 0, 0), 0.0, 0.0)
    # a real neighboring seat from the fixture room (45 degrees off forward)
    neighbor = to_viewpoint_frame(room.viewpoint("seat_b").pose, room.viewpoint("seat_c").pose)
    projection_case("neighbor_seat_visible", neighbor.position, 0.0, 0.0)
    projection_case("looking_up", Vec3(0, 1, -2), 0.0, 20 * DEG)

    doc = {
        "frame_change": frame_cases,
        "compose": compose_cases,
        "forward": forward_cases,
        "equirect": equirect_cases,
        "projection": projection_cases,
    }
    (OUT / "frame_fixtures.json").write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {OUT / 'frame_fixtures.json'}")


if __name__ == "__main__":
    main()
