"""3D pose algebra and equirectangular direction mapping.

Frame convention used everywhere in this package: right-handed, Y up,
forward is -Z, right is +X. Rotations follow the right-hand rule about
the named axis. A pose transforms local coordinates into its parent
frame (rotate, then translate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Algebraic identities (compose/invert, norms) hold to this tolerance.
ALGEBRA_TOL = 1e-9
# Below this norm a vector cannot be normalized into a direction.
ZERO_NORM_TOL = 1e-12

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Degenerate geometric input (zero-norm direction or quaternion)."""


class RangeError(GeometryError):
    """Input outside the documented domain of a mapping."""


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def scaled(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n <= ZERO_NORM_TOL:
            raise GeometryError("cannot normalize a zero-norm vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]

    @staticmethod
    def from_seq(seq) -> "Vec3":
        x, y, z = seq
        return Vec3(float(x), float(y), float(z))


ZERO = Vec3(0.0, 0.0, 0.0)
FORWARD = Vec3(0.0, 0.0, -1.0)


@dataclass(frozen=True)
class UnitQuat:
    """Unit quaternion, canonicalized so w >= 0 (and the first nonzero of
    x, y, z is positive when w == 0, which fixes the q/-q ambiguity)."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if n <= ZERO_NORM_TOL or not math.isfinite(n):
            raise GeometryError("quaternion norm is zero or non-finite")
        w, x, y, z = self.w, self.x, self.y, self.z
        # Only renormalize when actually off-unit: keeps already-unit values
        # bit-exact through encode/decode round trips.
        if abs(n - 1.0) > ALGEBRA_TOL:
            w, x, y, z = w / n, x / n, y / n, z / n
        if w < 0.0 or (w == 0.0 and _first_nonzero(x, y, z) < 0.0):
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @staticmethod
    def identity() -> "UnitQuat":
        return UnitQuat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float) -> "UnitQuat":
        a = axis.normalized()
        half = 0.5 * angle
        s = math.sin(half)
        return UnitQuat(math.cos(half), a.x * s, a.y * s, a.z * s)

    def multiply(self, other: "UnitQuat") -> "UnitQuat":
        a, b = self, other
        return UnitQuat(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )

    def conjugate(self) -> "UnitQuat":
        return UnitQuat(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v: Vec3) -> Vec3:
        # v' = q v q*, expanded via t = 2 (q_vec x v)
        qx, qy, qz, qw = self.x, self.y, self.z, self.w
        tx = 2.0 * (qy * v.z - qz * v.y)
        ty = 2.0 * (qz * v.x - qx * v.z)
        tz = 2.0 * (qx * v.y - qy * v.x)
        return Vec3(
            v.x + qw * tx + (qy * tz - qz * ty),
            v.y + qw * ty + (qz * tx - qx * tz),
            v.z + qw * tz + (qx * ty - qy * tx),
        )

    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        s = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        return 2.0 * math.atan2(s, abs(self.w))

    def log(self) -> Vec3:
        """Rotation vector (axis * angle); inverse of exp for angles < pi."""
        s = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if s <= ZERO_NORM_TOL:
            return Vec3(2.0 * self.x, 2.0 * self.y, 2.0 * self.z)
        theta = 2.0 * math.atan2(s, self.w)
        k = theta / s
        return Vec3(self.x * k, self.y * k, self.z * k)

    @staticmethod
    def exp(v: Vec3) -> "UnitQuat":
        """Quaternion for rotation vector v (axis * angle)."""
        theta = v.norm()
        if theta <= ZERO_NORM_TOL:
            return UnitQuat(1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z)
        half = 0.5 * theta
        k = math.sin(half) / theta
        return UnitQuat(math.cos(half), v.x * k, v.y * k, v.z * k)

    def as_list(self) -> list[float]:
        return [self.w, self.x, self.y, self.z]

    @staticmethod
    def from_seq(seq) -> "UnitQuat":
        w, x, y, z = seq
        return UnitQuat(float(w), float(x), float(y), float(z))


def _first_nonzero(*values: float) -> float:
    for v in values:
        if v != 0.0:
            return v
    return 0.0


def rot_x(angle: float) -> UnitQuat:
    return UnitQuat.from_axis_angle(Vec3(1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> UnitQuat:
    return UnitQuat.from_axis_angle(Vec3(0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> UnitQuat:
    return UnitQuat.from_axis_angle(Vec3(0.0, 0.0, 1.0), angle)


@dataclass(frozen=True)
class Pose:
    position: Vec3
    orientation: UnitQuat

    @staticmethod
    def identity() -> "Pose":
        return Pose(ZERO, UnitQuat.identity())

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(Vec3(x, y, z), UnitQuat.identity())

    def to_dict(self) -> dict:
        return {"pos": self.position.as_list(), "quat": self.orientation.as_list()}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(Vec3.from_seq(d["pos"]), UnitQuat.from_seq(d["quat"]))


def compose_pose(a: Pose, b: Pose) -> Pose:
    """a then b as one transform: point -> a(b(point))."""
    return Pose(
        a.position + a.orientation.rotate(b.position),
        a.orientation.multiply(b.orientation),
    )


def invert_pose(p: Pose) -> Pose:
    inv_q = p.orientation.conjugate()
    return Pose(-inv_q.rotate(p.position), inv_q)


def transform_point(p: Pose, q: Vec3) -> Vec3:
    return p.position + p.orientation.rotate(q)


def forward_vector(p: Pose) -> Vec3:
    return p.orientation.rotate(FORWARD)


def to_viewpoint_frame(viewer: Pose, entity: Pose) -> Pose:
    """Re-express a room-frame entity in the viewer's local frame, where the
    viewer sits at the origin looking down its own -Z."""
    return compose_pose(invert_pose(viewer), entity)


def dir_to_equirect(d: Vec3) -> tuple[float, float]:
    """Map a direction to (u, v) in a 2:1 equirectangular image.

    u = 0.5 + atan2(x, -z) / 2pi wrapped into [0, 1), v = 0.5 - asin(y) / pi,
    so looking straight ahead (-Z) lands on the image center. At the poles
    azimuth is undefined and u is pinned to 0.5.
    """
    n = d.normalized()
    y = max(-1.0, min(1.0, n.y))
    v = 0.5 - math.asin(y) / math.pi
    if abs(y) >= 1.0 - ALGEBRA_TOL:
        return 0.5, v
    u = (0.5 + math.atan2(n.x, -n.z) / TWO_PI) % 1.0
    return u, v


def equirect_to_dir(u: float, v: float) -> Vec3:
    """Unit direction for equirectangular coordinates u in [0,1), v in [0,1]."""
    if not (0.0 <= u < 1.0):
        raise RangeError(f"u must be in [0, 1): {u}")
    if not (0.0 <= v <= 1.0):
        raise RangeError(f"v must be in [0, 1]: {v}")
    azimuth = (u - 0.5) * TWO_PI
    elevation = (0.5 - v) * math.pi
    r = math.cos(elevation)
    return Vec3(r * math.sin(azimuth), math.sin(elevation), -r * math.cos(azimuth))
