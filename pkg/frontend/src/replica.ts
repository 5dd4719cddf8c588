/**
 * Client-side mirror of server-broadcast state. The replica only ever
 * applies what arrived on the wire: seat occupancy and element versions
 * are never invented locally, which is what makes the UI's
 * no-optimistic-updates rule checkable.
 */

import { Pose, poseIdentity, poseFromJson } from "./geometry.js";
import {
  ElementState,
  Envelope,
  HandFrame,
  Snapshot,
  parseHandFrame,
  parseSnapshot,
} from "./protocol.js";

export interface RemoteUser {
  sessionId: string;
  seatId: string | null;
  displayName: string | null;
  head: Pose;
  hands: Map<string, HandFrame>;
}

export class ClientReplica {
  sessionId: string | null = null;
  roomId: string | null = null;
  seats = new Map<string, string | null>();
  users = new Map<string, RemoteUser>();
  elementStates = new Map<string, ElementState>();
  deniedSeats: string[] = [];
  errors: { code: string; detail: string }[] = [];
  private streamSeq = new Map<string, number>();

  get seatId(): string | null {
    if (this.sessionId === null) return null;
    for (const [seat, occupant] of this.seats) {
      if (occupant === this.sessionId) return seat;
    }
    return null;
  }

  applySnapshot(snap: Snapshot): void {
    this.roomId = snap.room_id;
    this.seats = new Map(Object.entries(snap.seats));
    this.elementStates = new Map(snap.elements.map((e) => [e.id, e.state]));
    this.users = new Map(
      snap.users.map((u) => [
        u.session_id,
        {
          sessionId: u.session_id,
          seatId: u.seat_id,
          displayName: u.display_name,
          head: u.head,
          hands: new Map<string, HandFrame>(),
        },
      ]),
    );
  }

  apply(env: Envelope): void {
    const body = env.body;
    switch (env.msg_type) {
      case "server_welcome": {
        this.sessionId = body.session_id as string;
        this.applySnapshot(parseSnapshot(body.snapshot as Record<string, unknown>));
        break;
      }
      case "snapshot":
        this.applySnapshot(parseSnapshot(body));
        break;
      case "seat_update": {
        const sessionId = body.session_id as string;
        const seatId = body.seat_id as string | null;
        if (!(body.granted as boolean)) {
          this.deniedSeats.push(seatId ?? "");
          return;
        }
        for (const [seat, occupant] of this.seats) {
          if (occupant === sessionId) this.seats.set(seat, null);
        }
        if (seatId === null) {
          this.users.delete(sessionId);
          return;
        }
        this.seats.set(seatId, sessionId);
        this.user(sessionId, seatId);
        break;
      }
      case "element_state_msg":
        this.elementStates.set(body.element_id as string, body.state as ElementState);
        break;
      case "pose_update": {
        const owner = body.session_id as string | undefined;
        if (!owner) return; // own uplink format has no owner tag
        if (!this.acceptStream(owner, "pose", env.seq)) return;
        const user = this.user(owner, (body.seat_id as string | null) ?? null);
        user.head = poseFromJson(body.head as { pos: number[]; quat: number[] });
        break;
      }
      case "hand_update": {
        const owner = body.session_id as string | undefined;
        if (!owner) return;
        if (!this.acceptStream(owner, "hand", env.seq)) return;
        const user = this.user(owner, (body.seat_id as string | null) ?? null);
        for (const raw of body.frames as Record<string, unknown>[]) {
          const frame = parseHandFrame(raw);
          user.hands.set(frame.hand, frame);
        }
        break;
      }
      case "error_msg":
        this.errors.push({ code: body.code as string, detail: (body.detail as string) ?? "" });
        break;
      default:
        break; // nothing else mutates the replica
    }
  }

  private acceptStream(owner: string, stream: string, seq: number): boolean {
    const key = `${owner}/${stream}`;
    const last = this.streamSeq.get(key);
    if (last !== undefined && seq <= last) return false;
    this.streamSeq.set(key, seq);
    return true;
  }

  private user(sessionId: string, seatId: string | null): RemoteUser {
    let user = this.users.get(sessionId);
    if (!user) {
      user = {
        sessionId,
        seatId: null,
        displayName: null,
        head: poseIdentity(),
        hands: new Map(),
      };
      this.users.set(sessionId, user);
    }
    if (seatId !== null) user.seatId = seatId;
    return user;
  }
}
