import { describe, expect, it } from "vitest";

import * as st from "../src/state.js";

function readyState(): st.UISessionState {
  return st.sessionCreated(st.initialState(), "abc123", 200, 150);
}

describe("session state reducer", () => {
  it("starts empty and consistent", () => {
    const s = st.initialState();
    expect(s.markers).toHaveLength(0);
    expect(s.clickCount).toBe(0);
    expect(st.consistent(s)).toBe(true);
  });

  it("keeps markers 1:1 with acknowledged clicks", () => {
    let s = readyState();
    const gate = st.beginClick(s);
    expect(gate.allowed).toBe(true);
    s = st.clickAcknowledged(gate.state, { x: 10, y: 20, positive: true }, "MASK1", 1, 0.4);
    expect(s.markers).toEqual([{ x: 10, y: 20, positive: true }]);
    expect(s.clickCount).toBe(1);
    expect(st.consistent(s)).toBe(true);
  });

  it("refuses a click while one is pending", () => {
    let s = readyState();
    s = st.beginClick(s).state;
    const second = st.beginClick(s);
    expect(second.allowed).toBe(false);
    expect(second.state.lastError).toMatch(/busy/);
    expect(second.state.markers).toHaveLength(0);
  });

  it("refuses clicks before a session exists", () => {
    const gate = st.beginClick(st.initialState());
    expect(gate.allowed).toBe(false);
  });

  it("failure clears pending and records the error", () => {
    let s = readyState();
    s = st.beginClick(s).state;
    s = st.requestFailed(s, "HTTP 422: out of bounds");
    expect(s.pending).toBe(false);
    expect(s.lastError).toMatch(/422/);
    expect(s.markers).toHaveLength(0);
    expect(st.consistent(s)).toBe(true);
  });

  it("undo trims exactly one marker and restores the previous overlay", () => {
    let s = readyState();
    s = st.clickAcknowledged(st.beginClick(s).state, { x: 1, y: 1, positive: true }, "M1", 1, null);
    s = st.clickAcknowledged(st.beginClick(s).state, { x: 2, y: 2, positive: false }, "M2", 2, null);
    s = st.undoAcknowledged({ ...s, pending: true }, "M1", 1, null);
    expect(s.maskPng).toBe("M1");
    expect(s.markers).toEqual([{ x: 1, y: 1, positive: true }]);
    expect(st.consistent(s)).toBe(true);
  });

  it("undo to zero clicks clears the overlay", () => {
    let s = readyState();
    s = st.clickAcknowledged(st.beginClick(s).state, { x: 1, y: 1, positive: true }, "M1", 1, null);
    s = st.undoAcknowledged({ ...s, pending: true }, "EMPTY", 0, null);
    expect(s.maskPng).toBeNull();
    expect(s.markers).toHaveLength(0);
  });

  it("reset clears everything but keeps the session", () => {
    let s = readyState();
    s = st.clickAcknowledged(st.beginClick(s).state, { x: 1, y: 1, positive: true }, "M1", 1, 0.7);
    s = st.resetAcknowledged(s);
    expect(s.sessionId).toBe("abc123");
    expect(s.maskPng).toBeNull();
    expect(s.clickCount).toBe(0);
    expect(s.iou).toBeNull();
  });

  it("opacity is clamped to [0, 1]", () => {
    expect(st.setOpacity(st.initialState(), 1.7).overlayOpacity).toBe(1);
    expect(st.setOpacity(st.initialState(), -0.2).overlayOpacity).toBe(0);
  });

  it("click log matches the markers verbatim", () => {
    let s = readyState();
    s = st.clickAcknowledged(st.beginClick(s).state, { x: 5, y: 6, positive: true }, "M", 1, null);
    s = st.clickAcknowledged(st.beginClick(s).state, { x: 7, y: 8, positive: false }, "M", 2, null);
    expect(st.clickLog(s)).toEqual([
      { x: 5, y: 6, positive: true },
      { x: 7, y: 8, positive: false },
    ]);
  });
});
