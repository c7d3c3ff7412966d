/**
 * Full client-side round trip against the contract-faithful mock:
 * load -> three clicks (overlay + markers tracked) -> undo restores the
 * previous overlay -> exported click log replays to the identical mask.
 */

import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { buildExport } from "../src/exporting.js";
import * as st from "../src/state.js";
import { createMockService } from "./mock_service.js";

async function ackClick(
  api: ServiceClient,
  state: st.UISessionState,
  x: number,
  y: number,
  positive: boolean,
): Promise<st.UISessionState> {
  const gate = st.beginClick(state);
  expect(gate.allowed).toBe(true);
  const resp = await api.postClick(state.sessionId!, { x, y, positive });
  return st.clickAcknowledged(gate.state, { x, y, positive }, resp.mask, resp.click_count, resp.iou ?? null);
}

describe("UI round trip", () => {
  it("load, click x3, undo, export, replay to an identical mask", async () => {
    const mock = createMockService();
    const api = new ServiceClient("http://mock", mock.fetchImpl);

    // load image -> session
    const info = await api.createSession("UElORw==");
    let state = st.sessionCreated(st.initialState(), info.session_id, info.width, info.height);

    // three clicks; after each ack the overlay updates and markers stay 1:1
    const clicks: Array<[number, number, boolean]> = [
      [100, 70, true],
      [60, 40, true],
      [180, 120, false],
    ];
    const overlays: string[] = [];
    for (const [x, y, positive] of clicks) {
      const before = state.maskPng;
      state = await ackClick(api, state, x, y, positive);
      expect(state.maskPng).not.toBeNull();
      expect(state.maskPng).not.toBe(before);
      overlays.push(state.maskPng!);
      expect(st.consistent(state)).toBe(true);
    }
    expect(state.clickCount).toBe(3);
    expect(state.markers.map((m) => [m.x, m.y, m.positive])).toEqual(clicks);

    // server-side state agrees with the client (reconciliation check)
    const server = await api.getState(state.sessionId!);
    expect(server.clicks).toEqual(st.clickLog(state));
    expect(server.click_count).toBe(state.clickCount);

    // undo pops exactly one level and restores the prior overlay
    const undone = await api.undo(state.sessionId!);
    state = st.undoAcknowledged({ ...state, pending: true }, undone.mask, undone.click_count, null);
    expect(state.clickCount).toBe(2);
    expect(state.maskPng).toBe(overlays[1]);
    expect(st.consistent(state)).toBe(true);

    // redo the third click so the export carries all three
    state = await ackClick(api, state, 180, 120, false);
    const exported = buildExport(state);
    expect(exported.clicks).toHaveLength(3);
    expect(exported.mask_png_base64).toBe(overlays[2]);

    // replay the exported log in a fresh session: identical final mask
    const fresh = await api.createSession("UElORw==");
    let replayedMask: string | null = null;
    for (const c of exported.clicks) {
      const resp = await api.postClick(fresh.session_id, c);
      replayedMask = resp.mask;
    }
    expect(replayedMask).toBe(exported.mask_png_base64);
  });

  it("a rejected click leaves the queue intact and the page alive", async () => {
    const mock = createMockService();
    const api = new ServiceClient("http://mock", mock.fetchImpl);
    const info = await api.createSession("UElORw==");
    let state = st.sessionCreated(st.initialState(), info.session_id, info.width, info.height);

    const gate = st.beginClick(state);
    state = gate.state;
    try {
      await api.postClick(state.sessionId!, { x: 9999, y: 9999, positive: true });
      expect.unreachable("server should reject");
    } catch (err) {
      state = st.requestFailed(state, String(err));
    }
    expect(state.pending).toBe(false);
    expect(state.markers).toHaveLength(0);
    expect(st.consistent(state)).toBe(true);

    // a subsequent valid click still works
    state = await ackClick(api, state, 10, 10, true);
    expect(state.clickCount).toBe(1);
  });
});
