import math
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panomeet.geometry import Pose, Vec3, rot_y
from panomeet.gesture import (
    SWIPE_LEFT,
    SWIPE_RIGHT,
    GestureConfig,
    GestureConfigError,
    GestureWindow,
    detect_swipe,
    dispatch,
    gaze_target,
    palm_faces_head,
)
from panomeet.protocol import HandFrame
from panomeet.room import load_manifest

FIXTURES = Path(__file__).parent / "fixtures"
DEG = math.pi / 180.0


def palm_at(pos: Vec3, orientation=None, hand="right", tracked=True) -> HandFrame:
    joints = tuple(pos + Vec3(0.01 * k, 0, 0) for k in range(20)) if tracked else ()
    return HandFrame(
        hand=hand,
        palm=Pose(pos, orientation or rot_y(0.0)),
        joints=joints,
        tracked=tracked,
    )


def trajectory(
    win: GestureWindow,
    start: Vec3,
    velocity: Vec3,
    duration_ms: float,
    step_ms: float = 20.0,
    t0: float = 0.0,
):
    t = 0.0
    while t <= duration_ms:
        pos = start + velocity.scaled(t / 1000.0)
        win.push(t0 + t, palm_at(pos))
        t += step_ms


class TestPalmFacesHead:
    # palm 0.3 m in front of the head at eye height, normal toward the head
    HEAD = Pose.from_translation(0, 1.6, 0)

    def palm(self, extra_yaw_deg: float) -> HandFrame:
        pos = Vec3(0, 1.6, -0.3)
        facing_head = rot_y(180 * DEG)  # palm -Z points back at +Z (the head)
        return palm_at(pos, rot_y(extra_yaw_deg * DEG).multiply(facing_head))

    def test_direct_hit(self):
        assert palm_faces_head(self.palm(0), self.HEAD, GestureConfig())

    def test_perpendicular_misses(self):
        assert not palm_faces_head(self.palm(90), self.HEAD, GestureConfig())

    def test_cone_boundary(self):
        cfg = GestureConfig()
        assert palm_faces_head(self.palm(25), self.HEAD, cfg)
        assert not palm_faces_head(self.palm(35), self.HEAD, cfg)

    def test_untracked_is_false(self):
        frame = palm_at(Vec3(0, 1.6, -0.3), rot_y(180 * DEG), tracked=False)
        assert not palm_faces_head(frame, self.HEAD, GestureConfig())


class TestDetectSwipe:
    def test_fast_lateral_sweep_fires_right(self):
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(1.5, 0, 0), 200)
        assert detect_swipe(win) == SWIPE_RIGHT

    def test_leftward_sweep_fires_left(self):
        win = GestureWindow()
        trajectory(win, Vec3(0.3, 1.2, -0.4), Vec3(-1.5, 0, 0), 200)
        assert detect_swipe(win) == SWIPE_LEFT

    def test_slow_motion_does_not_fire(self):
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(0.3, 0, 0), 400)
        assert detect_swipe(win) is None

    def test_short_displacement_does_not_fire(self):
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(1.4, 0, 0), 80)  # 0.112 m total
        win.push(300.0, palm_at(Vec3(0.112, 1.2, -0.4)))  # hold still
        assert detect_swipe(win) is None

    def test_diagonal_equal_axes_does_not_fire(self):
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(1.5, 1.5, 0), 200)
        assert detect_swipe(win) is None

    def test_dominant_lateral_with_small_vertical_fires(self):
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(1.5, 0.5, 0), 200)
        assert detect_swipe(win) == SWIPE_RIGHT

    def test_mirror_symmetry(self):
        rng = random.Random(51)
        for _ in range(50):
            speed = rng.uniform(0.9, 3.0)
            duration = rng.uniform(160, 400)
            vy = rng.uniform(-0.3, 0.3) * speed
            win_r = GestureWindow()
            trajectory(win_r, Vec3(0, 1.2, -0.4), Vec3(speed, vy, 0), duration)
            win_l = GestureWindow()
            trajectory(win_l, Vec3(0, 1.2, -0.4), Vec3(-speed, vy, 0), duration)
            got_r = detect_swipe(win_r)
            got_l = detect_swipe(win_l)
            if got_r is None:
                assert got_l is None
            else:
                assert (got_r, got_l) == (SWIPE_RIGHT, SWIPE_LEFT)

    def test_monotonic_speed_scaling_never_unfires(self):
        base_speed, base_duration = 1.0, 400.0
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(base_speed, 0, 0), base_duration)
        assert detect_swipe(win) == SWIPE_RIGHT
        for scale in (1.5, 2.0, 2.5):
            # same path, shorter time; duration stays above the minimum
            duration = base_duration / scale
            assert duration >= GestureConfig().swipe_min_duration
            win = GestureWindow()
            trajectory(
                win, Vec3(0, 1.2, -0.4), Vec3(base_speed * scale, 0, 0), duration, step_ms=10
            )
            assert detect_swipe(win) == SWIPE_RIGHT

    def test_no_double_fire(self):
        win = GestureWindow()
        trajectory(win, Vec3(0, 1.2, -0.4), Vec3(1.5, 0, 0), 200)
        fires = 0
        if detect_swipe(win):
            fires += 1
        # stillness afterwards: same final position sampled on
        for t in range(220, 700, 20):
            win.push(float(t), palm_at(Vec3(0.3, 1.2, -0.4)))
            if detect_swipe(win):
                fires += 1
        assert fires == 1

    def test_window_prunes_old_samples(self):
        win = GestureWindow()
        win.push(0.0, palm_at(Vec3(0, 0, 0)))
        win.push(1000.0, palm_at(Vec3(1, 0, 0)))
        assert len(win.samples["right"]) == 1  # 0 ms sample fell out of the 500 ms window
        assert detect_swipe(win) is None

    def test_out_of_order_samples_rejected(self):
        win = GestureWindow()
        win.push(100.0, palm_at(Vec3(0, 0, 0)))
        with pytest.raises(ValueError):
            win.push(50.0, palm_at(Vec3(0, 0, 0)))


class TestGazeTarget:
    def test_axial_hit(self):
        view = [("projector", Pose(Vec3(0, 0, -2), rot_y(180 * DEG)), (1.0, 1.0))]
        assert gaze_target(Pose.identity(), view) == "projector"

    def test_far_offset_misses(self):
        view = [("projector", Pose(Vec3(5, 0, -2), rot_y(180 * DEG)), (1.0, 1.0))]
        assert gaze_target(Pose.identity(), view) is None

    def test_margin_boundary(self):
        # extent 1 m, margin 0.10 per side: half-span 0.5 * 1.2 = 0.6
        cfg = GestureConfig()
        for offset, want in [(0.54, "el"), (0.59, "el"), (0.61, None)]:
            view = [("el", Pose(Vec3(offset, 0, -2), rot_y(180 * DEG)), (1.0, 1.0))]
            assert gaze_target(Pose.identity(), view, cfg) == want

    def test_nearest_hit_wins(self):
        far = ("far", Pose(Vec3(0, 0, -4), rot_y(180 * DEG)), (2.0, 2.0))
        near = ("near", Pose(Vec3(0, 0, -2), rot_y(180 * DEG)), (2.0, 2.0))
        assert gaze_target(Pose.identity(), [far, near]) == "near"
        assert gaze_target(Pose.identity(), [near, far]) == "near"

    def test_behind_origin_ignored(self):
        view = [("behind", Pose(Vec3(0, 0, 2), rot_y(180 * DEG)), (4.0, 4.0))]
        assert gaze_target(Pose.identity(), view) is None

    def test_rotated_head_hits_side_element(self):
        # element 90 degrees to the right; head must yaw -90 to see it
        view = [("tv", Pose(Vec3(2, 0, 0), rot_y(90 * DEG)), (1.0, 1.0))]
        assert gaze_target(Pose.identity(), view) is None
        yawed = Pose(Vec3(0, 0, 0), rot_y(-90 * DEG))
        assert gaze_target(yawed, view) == "tv"

    def test_parallel_ray_skipped(self):
        view = [("edgeon", Pose(Vec3(0, 0, -2), rot_y(90 * DEG)), (1.0, 1.0))]
        assert gaze_target(Pose.identity(), view) is None


class TestDispatch:
    @pytest.fixture()
    def room(self):
        return load_manifest(FIXTURES / "meeting4.room.json")

    def test_swipe_left_on_projector_advances(self, room):
        cmd = dispatch(SWIPE_LEFT, "projector", room)
        assert cmd is not None
        assert (cmd.element_id, cmd.command) == ("projector", "next_slide")

    def test_swipe_right_goes_back(self, room):
        cmd = dispatch(SWIPE_RIGHT, "tv", room)
        assert (cmd.element_id, cmd.command) == ("tv", "prev_slide")

    def test_gate_closed_without_gaze(self, room):
        assert dispatch(SWIPE_LEFT, None, room) is None

    def test_no_swipe_no_command(self, room):
        assert dispatch(None, "projector", room) is None

    def test_unknown_or_custom_element_ignored(self, room):
        assert dispatch(SWIPE_LEFT, "ghost", room) is None

    @settings(max_examples=300, deadline=None)
    @given(
        st.sampled_from([None, SWIPE_LEFT, SWIPE_RIGHT]),
        st.sampled_from([None, "projector", "tv", "ghost"]),
    )
    def test_gate_soundness(self, swipe, gaze):
        room = load_manifest(FIXTURES / "meeting4.room.json")
        cmd = dispatch(swipe, gaze, room)
        if cmd is not None:
            assert gaze is not None and swipe is not None


class TestConfig:
    def test_defaults(self):
        cfg = GestureConfig()
        assert cfg.swipe_min_speed == 0.8
        assert cfg.palm_cone_half_angle == 30.0

    def test_from_dict_partial(self):
        cfg = GestureConfig.from_dict({"swipe_min_speed": 1.2})
        assert cfg.swipe_min_speed == 1.2
        assert cfg.window == 500.0

    def test_from_dict_none(self):
        assert GestureConfig.from_dict(None) == GestureConfig()

    def test_unknown_key_rejected(self):
        with pytest.raises(GestureConfigError, match="unknown"):
            GestureConfig.from_dict({"swipe_speed": 1.0})

    def test_non_positive_rejected(self):
        with pytest.raises(GestureConfigError):
            GestureConfig(swipe_min_speed=0.0)

    def test_dominance_below_one_rejected(self):
        with pytest.raises(GestureConfigError):
            GestureConfig(dominance_ratio=0.5)
