/**
 * Viewer shell: join a room, pick a seat, look around by dragging, drive
 * slides. The UI never applies its own actions: seat highlights, the
 * panorama switch, and slide numbers all come from the server's echoed
 * state, so what you see is what every other participant sees.
 */

import {
  Pose,
  cameraQuat,
  poseIdentity,
  projectToScreen,
  quadCorners,
  toViewpointFrame,
  transformPoint,
  vec3,
} from "./geometry.js";
import { Session } from "./net.js";
import { PanoRenderer } from "./render.js";
import { RoomModel, fetchRoom } from "./room.js";

const FOV_Y_DEG = 75;

const statusEl = document.getElementById("status") as HTMLDivElement;
const joinForm = document.getElementById("join") as HTMLFormElement;
const nameInput = document.getElementById("name") as HTMLInputElement;
const seatsEl = document.getElementById("seats") as HTMLDivElement;
const elementsEl = document.getElementById("elements") as HTMLDivElement;
const panoCanvas = document.getElementById("pano") as HTMLCanvasElement;
const overlayCanvas = document.getElementById("overlay") as HTMLCanvasElement;

let session: Session | null = null;
let room: RoomModel | null = null;
let renderer: PanoRenderer | null = null;
let yaw = 0;
let pitch = 0;
let shownSeat: string | null = null;
let headDirty = false;
let lastHeadSent = 0;

function setStatus(text: string, isError = false): void {
  statusEl.textContent = text;
  statusEl.classList.toggle("error", isError);
}

function connect(displayName: string): void {
  const url = Session.endpoint(window.location.href);
  session = new Session(url, displayName, {
    onStatus(status, detail) {
      if (status === "error" || status === "closed") {
        setStatus(`${detail} — reload or press Join to reconnect`, true);
        joinForm.classList.remove("hidden");
      } else {
        setStatus(detail);
      }
    },
    onApplied() {
      refreshPanels();
    },
  });
  session.connect();
  joinForm.classList.add("hidden");
}

function refreshPanels(): void {
  if (!session || !room) return;
  const replica = session.replica;

  seatsEl.replaceChildren();
  for (const vp of room.viewpoints.values()) {
    const occupant = replica.seats.get(vp.id) ?? null;
    const button = document.createElement("button");
    const mine = occupant !== null && occupant === replica.sessionId;
    const name = occupant ? replica.users.get(occupant)?.displayName ?? occupant : "free";
    button.textContent = `${vp.seatLabel}: ${mine ? "you" : name}`;
    button.disabled = occupant !== null && !mine;
    button.classList.toggle("mine", mine);
    button.onclick = () => session?.requestSeat(vp.id);
    seatsEl.append(button);
  }

  elementsEl.replaceChildren();
  for (const el of room.elements) {
    if (el.kind === "custom") continue;
    const state = replica.elementStates.get(el.id);
    const row = document.createElement("div");
    row.className = "element-row";
    const label = document.createElement("span");
    label.textContent = state
      ? `${el.id} ${state.slide_index + 1}/${state.slide_count}`
      : el.id;
    const prev = document.createElement("button");
    prev.textContent = "◀";
    prev.onclick = () => session?.sendSlide(el.id, "prev");
    const next = document.createElement("button");
    next.textContent = "▶";
    next.onclick = () => session?.sendSlide(el.id, "next");
    const seated = replica.seatId !== null;
    prev.disabled = next.disabled = !seated;
    row.append(prev, label, next);
    elementsEl.append(row);
  }

  const deniedCount = replica.deniedSeats.length;
  if (deniedCount > 0 && replica.deniedSeats.length !== lastDenials) {
    setStatus(`seat ${replica.deniedSeats[deniedCount - 1]} is taken`, true);
  }
  lastDenials = deniedCount;

  maybeSwitchSeatView();
}
let lastDenials = 0;

function maybeSwitchSeatView(): void {
  if (!session || !room || !renderer) return;
  const seat = session.replica.seatId;
  if (seat === shownSeat) return;
  shownSeat = seat;
  if (seat === null) {
    renderer.setPlaceholder("pick a seat");
    return;
  }
  const vp = room.viewpoints.get(seat);
  if (!vp) return;
  const target = renderer;
  fetch(new URL(`/room/${vp.image}`, window.location.href))
    .then((response) => {
      if (!response.ok) throw new Error(`${response.status}`);
      return response.blob();
    })
    .then((blob) => createImageBitmap(blob))
    .then((bitmap) => {
      if (shownSeat === seat) target.setImage(bitmap);
    })
    .catch(() => {
      if (shownSeat === seat) {
        target.setPlaceholder(`missing image for ${seat}`);
        setStatus(`panorama for ${seat} is missing; showing placeholder`, true);
      }
    });
}

function drawOverlay(): void {
  const ctx = overlayCanvas.getContext("2d");
  if (!ctx || !session || !room) return;
  const width = (overlayCanvas.width = overlayCanvas.clientWidth);
  const height = (overlayCanvas.height = overlayCanvas.clientHeight);
  ctx.clearRect(0, 0, width, height);
  const replica = session.replica;
  const seat = replica.seatId;
  if (seat === null) return;
  const seatPose = room.viewpoints.get(seat)?.pose;
  if (!seatPose) return;

  const project = (p: { x: number; y: number; z: number }) =>
    projectToScreen(p, yaw, pitch, FOV_Y_DEG, width, height);

  for (const el of room.elements) {
    const local = toViewpointFrame(seatPose, el.pose);
    const corners = quadCorners(local, el.extent).map(project);
    if (corners.some((c) => c === null)) continue;
    ctx.beginPath();
    corners.forEach((corner, i) => {
      const [x, y] = corner as [number, number];
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.closePath();
    ctx.fillStyle = "rgba(40, 120, 220, 0.25)";
    ctx.strokeStyle = "rgba(120, 180, 255, 0.9)";
    ctx.lineWidth = 2;
    ctx.fill();
    ctx.stroke();
    const state = replica.elementStates.get(el.id);
    const center = project(transformPoint(local, vec3(0, 0, 0)));
    if (center && state) {
      ctx.fillStyle = "#fff";
      ctx.font = "16px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText(
        `${el.id} — slide ${state.slide_index + 1}/${state.slide_count}`,
        center[0],
        center[1],
      );
    }
  }

  for (const user of replica.users.values()) {
    if (user.sessionId === replica.sessionId || user.seatId === null) continue;
    const theirSeat = room.viewpoints.get(user.seatId)?.pose;
    if (!theirSeat || user.seatId === seat) continue;
    const rel = toViewpointFrame(seatPose, theirSeat);
    const headLocal = transformPoint(rel, user.head.pos);
    const screen = project(headLocal);
    if (screen) {
      const [x, y] = screen;
      ctx.beginPath();
      ctx.arc(x, y, 14, 0, Math.PI * 2);
      ctx.fillStyle = "rgba(250, 200, 60, 0.9)";
      ctx.fill();
      ctx.fillStyle = "#111";
      ctx.font = "12px sans-serif";
      ctx.textAlign = "center";
      ctx.fillText((user.displayName ?? user.sessionId).slice(0, 10), x, y + 4);
    }
    ctx.fillStyle = "rgba(250, 120, 60, 0.9)";
    for (const frame of user.hands.values()) {
      if (!frame.tracked) continue;
      for (const joint of frame.joints) {
        const dot = project(transformPoint(rel, joint));
        if (dot) {
          ctx.beginPath();
          ctx.arc(dot[0], dot[1], 2.5, 0, Math.PI * 2);
          ctx.fill();
        }
      }
    }
  }
}

function headPose(): Pose {
  return { ...poseIdentity(), quat: cameraQuat(yaw, pitch) };
}

function frame(): void {
  renderer?.draw(yaw, pitch, FOV_Y_DEG);
  drawOverlay();
  const now = performance.now();
  if (session && headDirty && now - lastHeadSent > 100 && session.replica.seatId !== null) {
    session.sendHeadPose(headPose());
    headDirty = false;
    lastHeadSent = now;
  }
  requestAnimationFrame(frame);
}

function setupInput(): void {
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  overlayCanvas.addEventListener("pointerdown", (event) => {
    dragging = true;
    lastX = event.clientX;
    lastY = event.clientY;
    overlayCanvas.setPointerCapture(event.pointerId);
  });
  overlayCanvas.addEventListener("pointermove", (event) => {
    if (!dragging) return;
    const scale = 0.0035;
    yaw -= (event.clientX - lastX) * scale;
    pitch += (event.clientY - lastY) * scale;
    pitch = Math.max(-1.45, Math.min(1.45, pitch));
    lastX = event.clientX;
    lastY = event.clientY;
    headDirty = true;
  });
  overlayCanvas.addEventListener("pointerup", () => {
    dragging = false;
  });
}

async function boot(): Promise<void> {
  try {
    renderer = new PanoRenderer(panoCanvas);
  } catch (exc) {
    setStatus(String(exc), true);
    return;
  }
  setupInput();
  try {
    room = await fetchRoom(window.location.href);
    setStatus(`room ${room.roomId}: enter a name and join`);
  } catch (exc) {
    setStatus(`cannot load room: ${String(exc)}`, true);
  }
  joinForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const name = nameInput.value.trim() || "guest";
    connect(name);
  });
  window.addEventListener("beforeunload", () => session?.sendLeave());
  requestAnimationFrame(frame);
}

void boot();
