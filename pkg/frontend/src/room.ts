/** Room manifest as served at /room/manifest.json. */

import { Pose, poseFromJson } from "./geometry.js";

export interface ViewpointInfo {
  id: string;
  seatLabel: string;
  image: string;
  pose: Pose;
}

export interface ElementInfo {
  id: string;
  kind: "projector_surface" | "tv" | "custom";
  pose: Pose;
  extent: [number, number];
  slideCount: number;
  contentId: string;
}

export interface RoomModel {
  roomId: string;
  viewpoints: Map<string, ViewpointInfo>;
  elements: ElementInfo[];
}

export function parseRoom(doc: Record<string, unknown>): RoomModel {
  const viewpoints = new Map<string, ViewpointInfo>();
  for (const raw of doc.viewpoints as Record<string, unknown>[]) {
    viewpoints.set(raw.id as string, {
      id: raw.id as string,
      seatLabel: raw.seat_label as string,
      image: raw.image as string,
      pose: poseFromJson(raw.pose as { pos: number[]; quat: number[] }),
    });
  }
  const elements = (doc.elements as Record<string, unknown>[]).map((raw) => ({
    id: raw.id as string,
    kind: raw.kind as ElementInfo["kind"],
    pose: poseFromJson(raw.pose as { pos: number[]; quat: number[] }),
    extent: raw.extent as [number, number],
    slideCount: raw.slide_count as number,
    contentId: raw.content_id as string,
  }));
  return { roomId: doc.room_id as string, viewpoints, elements };
}

export async function fetchRoom(base: string): Promise<RoomModel> {
  const response = await fetch(new URL("/room/manifest.json", base));
  if (!response.ok) throw new Error(`manifest fetch failed: ${response.status}`);
  return parseRoom((await response.json()) as Record<string, unknown>);
}
