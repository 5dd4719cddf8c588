#!/usr/bin/env python3
"""Regenerate the demo room under demo/: four placeholder panoramas, the
room manifest, and a consistent measurement file for the calibrate demo."""

import json
import math
import sys
from pathlib import Path

from PIL import Image, ImageDraw

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from panomeet.calibration import measure_between, serialize_measurements  # noqa: E402
from panomeet.geometry import Pose, Vec3, rot_y  # noqa: E402

DEMO = Path(__file__).resolve().parents[1] / "demo"
SIZE = (1024, 512)  # 2:1 equirectangular

SEATS = {
    "seat_a": (Pose(Vec3(0.0, 1.2, 1.5), rot_y(0.0)), (40, 90, 160)),
    "seat_b": (Pose(Vec3(1.5, 1.2, 0.0), rot_y(math.pi / 2)), (170, 110, 40)),
    "seat_c": (Pose(Vec3(0.0, 1.2, -1.5), rot_y(math.pi)), (60, 140, 70)),
    "seat_d": (Pose(Vec3(-1.5, 1.2, 0.0), rot_y(-math.pi / 2)), (140, 60, 130)),
}


def make_pano(path: Path, label: str, tint):
    img = Image.new("RGB", SIZE)
    px = img.load()
    w, h = SIZE
    for y in range(h):
        # darker toward the floor, lighter toward the ceiling
        shade = 0.35 + 0.5 * (1.0 - y / h)
        for x in range(w):
            px[x, y] = tuple(int(c * shade) for c in tint)
    draw = ImageDraw.Draw(img)
    for u in range(0, w, w // 8):  # azimuth grid every 45 degrees
        draw.line([(u, 0), (u, h)], fill=(255, 255, 255), width=1)
    for v in range(0, h, h // 4):
        draw.line([(0, v), (w, v)], fill=(255, 255, 255), width=1)
    draw.rectangle([w // 2 - 90, h // 2 - 22, w // 2 + 90, h // 2 + 22], fill=(0, 0, 0))
    draw.text((w // 2 - 80, h // 2 - 10), f"{label}  (forward)", fill=(255, 255, 255))
    img.save(path, optimize=True)


def main():
    DEMO.mkdir(exist_ok=True)
    for seat, (_, tint) in SEATS.items():
        make_pano(DEMO / f"pano_{seat}.png", seat, tint)

    manifest = {
        "room_id": "demo_meeting",
        "viewpoints": [
            {
                "id": seat,
                "seat_label": seat.replace("_", " "),
                "image": f"pano_{seat}.png",
                "pose": pose.to_dict(),
            }
            for seat, (pose, _) in SEATS.items()
        ],
        "elements": [
            {
                "id": "projector",
                "kind": "projector_surface",
                "pose": {"pos": [0.0, 1.6, -3.0], "quat": [0.0, 0.0, 1.0, 0.0]},
                "extent": [2.0, 1.125],
                "slide_count": 10,
                "content_id": "deck-intro",
            },
            {
                "id": "tv",
                "kind": "tv",
                "pose": {
                    "pos": [3.0, 1.4, 0.0],
                    "quat": [0.7071067811865476, 0.0, 0.7071067811865475, 0.0],
                },
                "extent": [1.6, 0.9],
                "slide_count": 5,
                "content_id": "tv-agenda",
            },
        ],
    }
    (DEMO / "demo.room.json").write_text(json.dumps(manifest, indent=2) + "\n")

    poses = {seat: pose for seat, (pose, _) in SEATS.items()}
    pairs = [
        ("seat_a", "seat_b"),
        ("seat_b", "seat_c"),
        ("seat_c", "seat_d"),
        ("seat_a", "seat_c"),
    ]
    measurements = [measure_between(poses, a, b) for a, b in pairs]
    (DEMO / "measurements.json").write_text(serialize_measurements(measurements))
    print(f"wrote demo room into {DEMO}")


if __name__ == "__main__":
    main()
