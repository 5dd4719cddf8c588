/**
 * Wire protocol: one JSON object per WebSocket text frame, identical to
 * the newline-delimited framing the server speaks on TCP.
 */

import { Pose, poseFromJson, poseToJson } from "./geometry.js";

export const WEBSOCKET_PATH = "/session";

export type MsgType =
  | "client_hello"
  | "server_welcome"
  | "snapshot"
  | "seat_request"
  | "seat_update"
  | "pose_update"
  | "hand_update"
  | "element_command"
  | "element_state_msg"
  | "gesture_event"
  | "leave"
  | "error_msg";

export const MESSAGE_TYPES: ReadonlySet<string> = new Set([
  "client_hello",
  "server_welcome",
  "snapshot",
  "seat_request",
  "seat_update",
  "pose_update",
  "hand_update",
  "element_command",
  "element_state_msg",
  "gesture_event",
  "leave",
  "error_msg",
]);

export interface ElementState {
  version: number;
  slide_index: number;
  slide_count: number;
  content_id: string;
}

export interface SnapshotUser {
  session_id: string;
  display_name: string;
  seat_id: string;
  head: Pose;
}

export interface Snapshot {
  room_id: string;
  seats: Record<string, string | null>;
  users: SnapshotUser[];
  elements: { id: string; state: ElementState }[];
}

export interface HandFrame {
  hand: "left" | "right";
  palm: Pose;
  joints: { x: number; y: number; z: number }[];
  tracked: boolean;
}

export interface Envelope {
  msg_type: MsgType;
  seq: number;
  session_id: string;
  ts_ms: number;
  body: Record<string, unknown>;
}

export class ProtocolError extends Error {}

export function decodeEnvelope(text: string): Envelope {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (exc) {
    throw new ProtocolError(`invalid JSON: ${(exc as Error).message}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ProtocolError("top level must be an object");
  }
  const env = doc as Record<string, unknown>;
  if (typeof env.msg_type !== "string" || !MESSAGE_TYPES.has(env.msg_type)) {
    throw new ProtocolError(`unknown msg_type: ${String(env.msg_type)}`);
  }
  if (typeof env.seq !== "number" || env.seq < 0) {
    throw new ProtocolError("seq must be a non-negative number");
  }
  if (typeof env.session_id !== "string") throw new ProtocolError("session_id must be a string");
  if (typeof env.ts_ms !== "number" || !Number.isFinite(env.ts_ms)) {
    throw new ProtocolError("ts_ms must be finite");
  }
  if (typeof env.body !== "object" || env.body === null) {
    throw new ProtocolError("body must be an object");
  }
  return env as unknown as Envelope;
}

export function encodeEnvelope(env: Envelope): string {
  return JSON.stringify(env);
}

export function parseSnapshot(raw: Record<string, unknown>): Snapshot {
  const users = (raw.users as Record<string, unknown>[]).map((u) => ({
    session_id: u.session_id as string,
    display_name: u.display_name as string,
    seat_id: u.seat_id as string,
    head: poseFromJson(u.head as { pos: number[]; quat: number[] }),
  }));
  const elements = (raw.elements as Record<string, unknown>[]).map((e) => ({
    id: e.id as string,
    state: e.state as ElementState,
  }));
  return {
    room_id: raw.room_id as string,
    seats: raw.seats as Record<string, string | null>,
    users,
    elements,
  };
}

export function parseHandFrame(raw: Record<string, unknown>): HandFrame {
  return {
    hand: raw.hand as "left" | "right",
    palm: poseFromJson(raw.palm as { pos: number[]; quat: number[] }),
    joints: (raw.joints as number[][]).map((j) => ({ x: j[0], y: j[1], z: j[2] })),
    tracked: raw.tracked as boolean,
  };
}

export function helloBody(displayName: string): Record<string, unknown> {
  return { display_name: displayName };
}

export function seatRequestBody(seatId: string): Record<string, unknown> {
  return { seat_id: seatId };
}

export function elementCommandBody(
  elementId: string,
  command: "next_slide" | "prev_slide" | "set_slide" | "set_content",
  arg?: number | string,
): Record<string, unknown> {
  const body: Record<string, unknown> = { element_id: elementId, command };
  if (command === "set_slide") body.slide = arg as number;
  if (command === "set_content") body.content_id = arg as string;
  return body;
}

export function poseUpdateBody(head: Pose): Record<string, unknown> {
  return { head: poseToJson(head) };
}
