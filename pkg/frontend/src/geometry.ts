/**
 * Pose math for the viewer, mirroring the server's conventions exactly:
 * right-handed, Y up, forward along -Z, quaternions scalar-first and
 * canonicalized to w >= 0. Everything here is a pure function so the
 * placement math can be unit-tested against the shared fixtures.
 */

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface Quat {
  w: number;
  x: number;
  y: number;
  z: number;
}

export interface Pose {
  pos: Vec3;
  quat: Quat;
}

export const vec3 = (x: number, y: number, z: number): Vec3 => ({ x, y, z });

export function add(a: Vec3, b: Vec3): Vec3 {
  return { x: a.x + b.x, y: a.y + b.y, z: a.z + b.z };
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return { x: a.x - b.x, y: a.y - b.y, z: a.z - b.z };
}

export function scale(v: Vec3, s: number): Vec3 {
  return { x: v.x * s, y: v.y * s, z: v.z * s };
}

export function norm(v: Vec3): number {
  return Math.hypot(v.x, v.y, v.z);
}

export function quatFromArray(q: number[]): Quat {
  let [w, x, y, z] = q;
  const n = Math.hypot(w, x, y, z);
  if (!(n > 1e-12) || !Number.isFinite(n)) {
    throw new Error("quaternion norm is zero or non-finite");
  }
  if (Math.abs(n - 1) > 1e-9) {
    w /= n;
    x /= n;
    y /= n;
    z /= n;
  }
  if (w < 0 || (w === 0 && firstNonZero(x, y, z) < 0)) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
  return { w, x, y, z };
}

function firstNonZero(...values: number[]): number {
  for (const v of values) {
    if (v !== 0) return v;
  }
  return 0;
}

export const quatIdentity = (): Quat => ({ w: 1, x: 0, y: 0, z: 0 });

export function quatMultiply(a: Quat, b: Quat): Quat {
  return {
    w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
    x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
    y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
    z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
  };
}

export function quatConjugate(q: Quat): Quat {
  return { w: q.w, x: -q.x, y: -q.y, z: -q.z };
}

export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const tx = 2 * (q.y * v.z - q.z * v.y);
  const ty = 2 * (q.z * v.x - q.x * v.z);
  const tz = 2 * (q.x * v.y - q.y * v.x);
  return {
    x: v.x + q.w * tx + (q.y * tz - q.z * ty),
    y: v.y + q.w * ty + (q.z * tx - q.x * tz),
    z: v.z + q.w * tz + (q.x * ty - q.y * tx),
  };
}

export function rotY(angle: number): Quat {
  return { w: Math.cos(angle / 2), x: 0, y: Math.sin(angle / 2), z: 0 };
}

export function rotX(angle: number): Quat {
  return { w: Math.cos(angle / 2), x: Math.sin(angle / 2), y: 0, z: 0 };
}

export function poseFromJson(d: { pos: number[]; quat: number[] }): Pose {
  return {
    pos: vec3(d.pos[0], d.pos[1], d.pos[2]),
    quat: quatFromArray(d.quat),
  };
}

export function poseToJson(p: Pose): { pos: number[]; quat: number[] } {
  return { pos: [p.pos.x, p.pos.y, p.pos.z], quat: [p.quat.w, p.quat.x, p.quat.y, p.quat.z] };
}

export const poseIdentity = (): Pose => ({ pos: vec3(0, 0, 0), quat: quatIdentity() });

export function composePose(a: Pose, b: Pose): Pose {
  return { pos: add(a.pos, quatRotate(a.quat, b.pos)), quat: quatMultiply(a.quat, b.quat) };
}

export function invertPose(p: Pose): Pose {
  const invQ = quatConjugate(p.quat);
  return { pos: scale(quatRotate(invQ, p.pos), -1), quat: invQ };
}

export function transformPoint(p: Pose, q: Vec3): Vec3 {
  return add(p.pos, quatRotate(p.quat, q));
}

export function forwardVector(p: Pose): Vec3 {
  return quatRotate(p.quat, vec3(0, 0, -1));
}

/** Re-express a room-frame entity in a viewer's local frame. */
export function toViewpointFrame(viewer: Pose, entity: Pose): Pose {
  return composePose(invertPose(viewer), entity);
}

/** Equirectangular texture coordinates for a direction; u wraps into [0,1). */
export function dirToEquirect(d: Vec3): [number, number] {
  const n = norm(d);
  if (!(n > 1e-12)) throw new Error("zero-norm direction");
  const y = Math.max(-1, Math.min(1, d.y / n));
  const v = 0.5 - Math.asin(y) / Math.PI;
  if (Math.abs(y) >= 1 - 1e-9) return [0.5, v];
  let u = 0.5 + Math.atan2(d.x / n, -d.z / n) / (2 * Math.PI);
  u = ((u % 1) + 1) % 1;
  return [u, v];
}

/** Camera orientation for a yaw (about +Y) then pitch (about +X). */
export function cameraQuat(yaw: number, pitch: number): Quat {
  return quatMultiply(rotY(yaw), rotX(pitch));
}

/**
 * Project a seat-frame point onto the screen for a camera at the origin.
 * Returns null when the point is not strictly in front of the camera.
 */
export function projectToScreen(
  point: Vec3,
  yaw: number,
  pitch: number,
  fovYDeg: number,
  width: number,
  height: number,
): [number, number] | null {
  const cam = cameraQuat(yaw, pitch);
  const local = quatRotate(quatConjugate(cam), point);
  if (local.z >= -1e-9) return null;
  const tanY = Math.tan(((fovYDeg / 2) * Math.PI) / 180);
  const tanX = tanY * (width / height);
  const xNdc = local.x / -local.z / tanX;
  const yNdc = local.y / -local.z / tanY;
  return [((xNdc + 1) / 2) * width, ((1 - yNdc) / 2) * height];
}

/** Corners of an element quad (extent w x h) in the element's seat frame. */
export function quadCorners(localPose: Pose, extent: [number, number]): Vec3[] {
  const [w, h] = extent;
  return [
    vec3(-w / 2, -h / 2, 0),
    vec3(w / 2, -h / 2, 0),
    vec3(w / 2, h / 2, 0),
    vec3(-w / 2, h / 2, 0),
  ].map((c) => transformPoint(localPose, c));
}
