/**
 * WebSocket session wiring. Outbound helpers build envelopes; nothing in
 * here mutates the replica except messages actually received from the
 * server (the authority).
 */

import { Pose } from "./geometry.js";
import {
  Envelope,
  MsgType,
  ProtocolError,
  WEBSOCKET_PATH,
  decodeEnvelope,
  elementCommandBody,
  encodeEnvelope,
  helloBody,
  poseUpdateBody,
  seatRequestBody,
} from "./protocol.js";
import { ClientReplica } from "./replica.js";

export type SessionStatus = "connecting" | "connected" | "welcomed" | "closed" | "error";

export interface SessionCallbacks {
  onStatus(status: SessionStatus, detail: string): void;
  onApplied(env: Envelope): void;
}

export class Session {
  replica = new ClientReplica();
  private socket: WebSocket | null = null;
  private seq = 0;

  constructor(
    private readonly url: string,
    private readonly displayName: string,
    private readonly callbacks: SessionCallbacks,
  ) {}

  static endpoint(base: string): string {
    const url = new URL(base);
    url.protocol = url.protocol === "https:" ? "wss:" : "ws:";
    url.pathname = WEBSOCKET_PATH;
    return url.toString();
  }

  connect(): void {
    this.callbacks.onStatus("connecting", this.url);
    let socket: WebSocket;
    try {
      socket = new WebSocket(this.url);
    } catch (exc) {
      this.callbacks.onStatus("error", `cannot open ${this.url}: ${String(exc)}`);
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.callbacks.onStatus("connected", "joining…");
      this.send("client_hello", helloBody(this.displayName));
    };
    socket.onmessage = (event) => this.onFrame(String(event.data));
    socket.onerror = () => this.callbacks.onStatus("error", "connection error");
    socket.onclose = () => this.callbacks.onStatus("closed", "server closed the session");
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }

  private onFrame(text: string): void {
    let env: Envelope;
    try {
      env = decodeEnvelope(text);
    } catch (exc) {
      if (exc instanceof ProtocolError) {
        this.callbacks.onStatus("error", `protocol error: ${exc.message}`);
        return;
      }
      throw exc;
    }
    const hadSession = this.replica.sessionId !== null;
    this.replica.apply(env);
    if (!hadSession && this.replica.sessionId !== null) {
      this.callbacks.onStatus("welcomed", `session ${this.replica.sessionId}`);
    }
    this.callbacks.onApplied(env);
  }

  private send(msgType: MsgType, body: Record<string, unknown>): void {
    if (!this.socket || this.socket.readyState !== WebSocket.OPEN) return;
    const env: Envelope = {
      msg_type: msgType,
      seq: this.seq++,
      session_id: this.replica.sessionId ?? "",
      ts_ms: Date.now(),
      body,
    };
    this.socket.send(encodeEnvelope(env));
  }

  requestSeat(seatId: string): void {
    this.send("seat_request", seatRequestBody(seatId));
  }

  sendSlide(elementId: string, direction: "next" | "prev"): void {
    this.send(
      "element_command",
      elementCommandBody(elementId, direction === "next" ? "next_slide" : "prev_slide"),
    );
  }

  sendHeadPose(head: Pose): void {
    this.send("pose_update", poseUpdateBody(head));
  }

  sendLeave(): void {
    this.send("leave", {});
  }
}
