/**
 * Canvas client: load an image, left/right-click to add positive/negative
 * clicks, watch the mask overlay, undo/reset, export the result.
 */

import { ApiError, ServiceClient } from "./api.js";
import { displayToImage, imageToDisplay, letterbox, Letterbox } from "./coords.js";
import { buildExport, download, maskDataUrl } from "./exporting.js";
import * as st from "./state.js";

const STAGE_SIDE = 560;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

let state = st.initialState();
let client = new ServiceClient(readBaseUrl());
let image: HTMLImageElement | null = null;
let imageB64: string | null = null;
let maskImage: HTMLImageElement | null = null;
let lb: Letterbox | null = null;

function readBaseUrl(): string {
  return localStorage.getItem("clickseg-base-url") ?? "http://127.0.0.1:8080";
}

function toast(message: string, isError = true): void {
  const el = $("toast");
  el.textContent = message;
  el.className = isError ? "toast error show" : "toast show";
  setTimeout(() => (el.className = "toast"), 2600);
}

function setState(next: st.UISessionState): void {
  state = next;
  if (!st.consistent(state)) console.warn("inconsistent UI state", state);
  $("click-count").textContent = String(state.clickCount);
  $("iou").textContent = state.iou === null ? "–" : state.iou.toFixed(3);
  ($("undo") as HTMLButtonElement).disabled = state.clickCount === 0 || state.pending;
  ($("export") as HTMLButtonElement).disabled = state.maskPng === null;
  if (state.lastError) toast(state.lastError);
  render();
}

function render(): void {
  const canvas = $("stage") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#1d1f24";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (!image || !lb) return;
  ctx.drawImage(image, lb.ox, lb.oy, lb.cw, lb.ch);
  if (maskImage) {
    const off = document.createElement("canvas");
    off.width = maskImage.naturalWidth;
    off.height = maskImage.naturalHeight;
    const octx = off.getContext("2d")!;
    octx.drawImage(maskImage, 0, 0);
    octx.globalCompositeOperation = "source-in";
    octx.fillStyle = "#9340ff";
    octx.fillRect(0, 0, off.width, off.height);
    ctx.globalAlpha = state.overlayOpacity;
    ctx.drawImage(off, lb.ox, lb.oy, lb.cw, lb.ch);
    ctx.globalAlpha = 1.0;
  }
  for (const m of state.markers) {
    const { px, py } = imageToDisplay(m.x, m.y, lb);
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, Math.PI * 2);
    ctx.fillStyle = m.positive ? "#37d353" : "#f04343";
    ctx.fill();
    ctx.lineWidth = 1.5;
    ctx.strokeStyle = "#ffffff";
    ctx.stroke();
  }
}

function loadMask(maskPng: string | null): Promise<void> {
  if (maskPng === null) {
    maskImage = null;
    return Promise.resolve();
  }
  return new Promise((resolve) => {
    const img = new Image();
    img.onload = () => {
      maskImage = img;
      resolve();
    };
    img.src = maskDataUrl(maskPng);
  });
}

async function onFileChosen(file: File): Promise<void> {
  const dataUrl: string = await new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
  imageB64 = dataUrl.split(",", 2)[1];
  const img = new Image();
  await new Promise((resolve) => {
    img.onload = resolve;
    img.src = dataUrl;
  });
  image = img;
  try {
    const info = await client.createSession(imageB64);
    lb = letterbox(info.width, info.height, STAGE_SIDE);
    maskImage = null;
    setState(st.sessionCreated(state, info.session_id, info.width, info.height));
    toast(`session ready (${info.width}×${info.height})`, false);
  } catch (err) {
    setState(st.requestFailed(state, describe(err)));
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return `service unreachable: ${String(err)}`;
}

async function onStageClick(ev: MouseEvent, positive: boolean): Promise<void> {
  ev.preventDefault();
  if (!lb || state.sessionId === null) return;
  const rect = ($("stage") as HTMLCanvasElement).getBoundingClientRect();
  const point = displayToImage(ev.clientX - rect.left, ev.clientY - rect.top, lb, state.width, state.height);
  if (!point) return; // padding area
  const gate = st.beginClick(state);
  setState(gate.state);
  if (!gate.allowed) return;
  try {
    const resp = await client.postClick(state.sessionId, { ...point, positive });
    await loadMask(resp.mask);
    setState(st.clickAcknowledged(state, { ...point, positive }, resp.mask, resp.click_count, resp.iou ?? null));
  } catch (err) {
    setState(st.requestFailed(state, describe(err)));
  }
}

async function onUndo(): Promise<void> {
  if (state.sessionId === null || state.pending) return;
  setState({ ...state, pending: true });
  try {
    const resp = await client.undo(state.sessionId);
    const next = st.undoAcknowledged(state, resp.mask, resp.click_count, resp.iou ?? null);
    await loadMask(next.maskPng);
    setState(next);
  } catch (err) {
    setState(st.requestFailed(state, describe(err)));
  }
}

async function onReset(): Promise<void> {
  if (state.sessionId === null || state.pending) return;
  setState({ ...state, pending: true });
  try {
    await client.reset(state.sessionId);
    maskImage = null;
    setState(st.resetAcknowledged(state));
  } catch (err) {
    setState(st.requestFailed(state, describe(err)));
  }
}

function onExport(): void {
  try {
    const payload = buildExport(state);
    download("clicks.json", JSON.stringify(payload, null, 2), "application/json");
    if (payload.mask_png_base64) download("mask.png", maskDataUrl(payload.mask_png_base64), "image/png");
  } catch (err) {
    toast(describe(err));
  }
}

export function boot(): void {
  const stage = $("stage") as HTMLCanvasElement;
  stage.width = STAGE_SIDE;
  stage.height = STAGE_SIDE;
  stage.addEventListener("click", (ev) => void onStageClick(ev, true));
  stage.addEventListener("contextmenu", (ev) => void onStageClick(ev, false));
  ($("file") as HTMLInputElement).addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void onFileChosen(file);
  });
  $("undo").addEventListener("click", () => void onUndo());
  $("reset").addEventListener("click", () => void onReset());
  $("export").addEventListener("click", onExport);
  const slider = $("opacity") as HTMLInputElement;
  slider.addEventListener("input", () => setState(st.setOpacity(state, Number(slider.value) / 100)));
  const base = $("base-url") as HTMLInputElement;
  base.value = readBaseUrl();
  base.addEventListener("change", () => {
    localStorage.setItem("clickseg-base-url", base.value);
    client = new ServiceClient(base.value);
    toast(`service URL set to ${base.value}`, false);
  });
  void client.healthz().then(
    (h) => toast(`service ok (checkpoint ${String(h.checkpoint_hash).slice(0, 8)}…)`, false),
    () => toast("service not reachable yet — set the URL below"),
  );
  render();
}

boot();
