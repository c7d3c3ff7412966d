/**
 * Client-side session state.
 *
 * Invariants the reducer enforces:
 *  - markers correspond 1:1 to clicks the server acknowledged;
 *  - while a request is in flight (`pending`) no new click dispatches;
 *  - undo/reset keep marker list and click count in lock step.
 */

export interface Marker {
  x: number;
  y: number;
  positive: boolean;
}

export interface UISessionState {
  sessionId: string | null;
  width: number;
  height: number;
  maskPng: string | null;
  markers: Marker[];
  clickCount: number;
  iou: number | null;
  pending: boolean;
  lastError: string | null;
  overlayOpacity: number;
}

export function initialState(): UISessionState {
  return {
    sessionId: null,
    width: 0,
    height: 0,
    maskPng: null,
    markers: [],
    clickCount: 0,
    iou: null,
    pending: false,
    lastError: null,
    overlayOpacity: 0.5,
  };
}

export function sessionCreated(s: UISessionState, id: string, width: number, height: number): UISessionState {
  return { ...initialState(), overlayOpacity: s.overlayOpacity, sessionId: id, width, height };
}

/** Gate for dispatching a click; refuses while one is in flight. */
export function beginClick(s: UISessionState): { state: UISessionState; allowed: boolean } {
  if (s.pending || s.sessionId === null) {
    return { state: { ...s, lastError: s.pending ? "busy: previous click still processing" : "no session" }, allowed: false };
  }
  return { state: { ...s, pending: true, lastError: null }, allowed: true };
}

export function clickAcknowledged(
  s: UISessionState,
  marker: Marker,
  maskPng: string,
  clickCount: number,
  iou: number | null,
): UISessionState {
  return {
    ...s,
    pending: false,
    maskPng,
    markers: [...s.markers, marker],
    clickCount,
    iou,
    lastError: null,
  };
}

export function requestFailed(s: UISessionState, message: string): UISessionState {
  return { ...s, pending: false, lastError: message };
}

export function undoAcknowledged(
  s: UISessionState,
  maskPng: string,
  clickCount: number,
  iou: number | null,
): UISessionState {
  return {
    ...s,
    pending: false,
    maskPng: clickCount === 0 ? null : maskPng,
    markers: s.markers.slice(0, clickCount),
    clickCount,
    iou,
    lastError: null,
  };
}

export function resetAcknowledged(s: UISessionState): UISessionState {
  return { ...s, pending: false, maskPng: null, markers: [], clickCount: 0, iou: null, lastError: null };
}

export function setOpacity(s: UISessionState, value: number): UISessionState {
  return { ...s, overlayOpacity: Math.min(1, Math.max(0, value)) };
}

/** True when the reducer invariants hold; surfaced in tests and dev builds. */
export function consistent(s: UISessionState): boolean {
  return s.markers.length === s.clickCount && (!s.pending || s.sessionId !== null);
}

/** Exportable click log, replayable against the service verbatim. */
export function clickLog(s: UISessionState): { x: number; y: number; positive: boolean }[] {
  return s.markers.map((m) => ({ x: m.x, y: m.y, positive: m.positive }));
}
