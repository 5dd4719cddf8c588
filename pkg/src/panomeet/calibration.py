"""Registration of viewpoint poses into one common coordinate system.

Input is a set of weighted relative-pose measurements between seats
(a pose graph). The anchor seat (lexicographically smallest id) is pinned
to the identity to fix the gauge; every other pose is initialized along a
breadth-first spanning tree and then refined by damped Gauss-Newton on
the weighted residuals. Residuals mix translation (meters) and rotation
angle (radians) 1:1; per-measurement weights let callers rebalance.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Pose, UnitQuat, Vec3, compose_pose, invert_pose

DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-10
_FD_EPS = 1e-6  # finite-difference step for the numeric Jacobian


class CalibrationError(ValueError):
    pass


class DisconnectedGraphError(CalibrationError):
    def __init__(self, unreachable: list[str]):
        super().__init__(f"measurement graph is disconnected; unreachable: {unreachable}")
        self.unreachable = unreachable


@dataclass(frozen=True)
class PoseGraphMeasurement:
    from_id: str
    to_id: str
    relative: Pose  # pose of `to` expressed in `from`'s frame
    weight: float = 1.0

    def __post_init__(self):
        if self.from_id == self.to_id:
            raise CalibrationError(f"self-edge on {self.from_id!r}")
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise CalibrationError(f"weight must be positive: {self.weight}")


@dataclass
class CalibrationResult:
    poses: dict[str, Pose]
    residual_rms: float
    iterations_used: int = 0
    anchor_id: str = ""
    history: list[float] = field(default_factory=list)


def _graph_ids(measurements: list[PoseGraphMeasurement]) -> list[str]:
    ids = {m.from_id for m in measurements} | {m.to_id for m in measurements}
    return sorted(ids)


def spanning_tree_init(measurements: list[PoseGraphMeasurement]) -> dict[str, Pose]:
    """Initial poses by composing measurements along a BFS tree from the anchor.

    Edges traversed against their direction use the inverted relative pose.
    """
    if not measurements:
        raise CalibrationError("no measurements given")
    ids = _graph_ids(measurements)
    adjacency: dict[str, list[tuple[str, Pose]]] = {i: [] for i in ids}
    for m in measurements:
        adjacency[m.from_id].append((m.to_id, m.relative))
        adjacency[m.to_id].append((m.from_id, invert_pose(m.relative)))
    for neighbors in adjacency.values():
        neighbors.sort(key=lambda pair: pair[0])

    anchor = ids[0]
    poses: dict[str, Pose] = {anchor: Pose.identity()}
    queue = deque([anchor])
    while queue:
        cur = queue.popleft()
        for other, rel in adjacency[cur]:
            if other not in poses:
                poses[other] = compose_pose(poses[cur], rel)
                queue.append(other)
    unreachable = sorted(set(ids) - set(poses))
    if unreachable:
        raise DisconnectedGraphError(unreachable)
    return poses


def _residual_blocks(poses: dict[str, Pose], measurements) -> list[tuple[float, Vec3, Vec3]]:
    blocks = []
    for m in measurements:
        try:
            pi, pj = poses[m.from_id], poses[m.to_id]
        except KeyError as exc:
            raise CalibrationError(f"pose missing for id {exc.args[0]!r}") from exc
        pred = compose_pose(invert_pose(pi), pj)
        dt = pred.position - m.relative.position
        dq = m.relative.orientation.conjugate().multiply(pred.orientation).log()
        blocks.append((m.weight, dt, dq))
    return blocks


def residual_rms(poses: dict[str, Pose], measurements: list[PoseGraphMeasurement]) -> float:
    """Weighted RMS of the combined translation (m) and rotation (rad) residuals.

    Weight-normalized: scaling every weight by the same factor leaves it
    unchanged. Zero iff every measurement is exactly consistent.
    """
    if not measurements:
        raise CalibrationError("no measurements given")
    total = 0.0
    wsum = 0.0
    for w, dt, dq in _residual_blocks(poses, measurements):
        total += w * (dt.dot(dt) + dq.dot(dq))
        wsum += w
    return math.sqrt(total / wsum)


def _residual_vector(poses, measurements) -> np.ndarray:
    rows = []
    for w, dt, dq in _residual_blocks(poses, measurements):
        s = math.sqrt(w)
        rows.extend((s * dt.x, s * dt.y, s * dt.z, s * dq.x, s * dq.y, s * dq.z))
    return np.array(rows)


def _perturbed(baseline: dict[str, Pose], free_ids: list[str], x: np.ndarray) -> dict[str, Pose]:
    poses = dict(baseline)
    for k, vid in enumerate(free_ids):
        dt = Vec3(x[6 * k], x[6 * k + 1], x[6 * k + 2])
        dw = Vec3(x[6 * k + 3], x[6 * k + 4], x[6 * k + 5])
        base = baseline[vid]
        poses[vid] = Pose(base.position + dt, UnitQuat.exp(dw).multiply(base.orientation))
    return poses


def refine_poses(
    init: dict[str, Pose],
    measurements: list[PoseGraphMeasurement],
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> CalibrationResult:
    """Damped Gauss-Newton refinement of the pose graph.

    The anchor (lexicographically smallest id) is held fixed; steps that
    would increase the residual are halved until they improve it, so the
    accepted residual sequence never increases. Stops when the improvement
    drops below tol or after max_iters accepted iterations.
    """
    if not measurements:
        raise CalibrationError("no measurements given")
    ids = _graph_ids(measurements)
    missing = [i for i in ids if i not in init]
    if missing:
        raise CalibrationError(f"init does not cover ids: {missing}")
    anchor = ids[0]
    free_ids = ids[1:]
    baseline = {i: init[i] for i in ids}
    wsum = sum(m.weight for m in measurements)

    def rms_of(sq_norm: float) -> float:
        return math.sqrt(sq_norm / wsum)

    r = _residual_vector(baseline, measurements)
    current_sq = float(r @ r)
    history = [rms_of(current_sq)]
    iterations = 0
    n = 6 * len(free_ids)

    for _ in range(max_iters):
        if n == 0:
            break
        jac = np.empty((len(r), n))
        for k in range(n):
            step = np.zeros(n)
            step[k] = _FD_EPS
            r_plus = _residual_vector(_perturbed(baseline, free_ids, step), measurements)
            step[k] = -_FD_EPS
            r_minus = _residual_vector(_perturbed(baseline, free_ids, step), measurements)
            jac[:, k] = (r_plus - r_minus) / (2 * _FD_EPS)

        delta, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        if not np.all(np.isfinite(delta)):
            break

        accepted = False
        alpha = 1.0
        for _half in range(24):
            candidate = _perturbed(baseline, free_ids, alpha * delta)
            r_cand = _residual_vector(candidate, measurements)
            cand_sq = float(r_cand @ r_cand)
            if cand_sq < current_sq:
                baseline = candidate
                r = r_cand
                improvement = rms_of(current_sq) - rms_of(cand_sq)
                current_sq = cand_sq
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        iterations += 1
        history.append(rms_of(current_sq))
        if improvement < tol:
            break

    # re-gauge so the anchor is identity exactly
    gauge = invert_pose(baseline[anchor])
    final = {i: compose_pose(gauge, baseline[i]) for i in ids}
    final[anchor] = Pose.identity()
    return CalibrationResult(
        poses=final,
        residual_rms=residual_rms(final, measurements),
        iterations_used=iterations,
        anchor_id=anchor,
        history=history,
    )


def align_viewpoints(
    measurements: list[PoseGraphMeasurement],
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> CalibrationResult:
    """Spanning-tree initialization followed by refinement, with defaults."""
    init = spanning_tree_init(measurements)
    return refine_poses(init, measurements, max_iters=max_iters, tol=tol)


def measure_between(poses: dict[str, Pose], from_id: str, to_id: str, weight: float = 1.0) -> PoseGraphMeasurement:
    """Exact relative-pose measurement between two known poses."""
    rel = compose_pose(invert_pose(poses[from_id]), poses[to_id])
    return PoseGraphMeasurement(from_id, to_id, rel, weight)


def parse_measurements(text: str) -> list[PoseGraphMeasurement]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"measurement syntax error: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(doc, list):
        raise CalibrationError("measurement file must be a JSON list")
    out = []
    for i, raw in enumerate(doc):
        try:
            out.append(
                PoseGraphMeasurement(
                    from_id=str(raw["from"]),
                    to_id=str(raw["to"]),
                    relative=Pose.from_dict(raw["pose"]),
                    weight=float(raw.get("weight", 1.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"measurements[{i}]: {exc}") from exc
    return out


def load_measurements(path: str | Path) -> list[PoseGraphMeasurement]:
    return parse_measurements(Path(path).read_text(encoding="utf-8"))


def serialize_measurements(measurements: list[PoseGraphMeasurement]) -> str:
    doc = [
        {"from": m.from_id, "to": m.to_id, "pose": m.relative.to_dict(), "weight": m.weight}
        for m in measurements
    ]
    return json.dumps(doc, indent=2) + "\n"
