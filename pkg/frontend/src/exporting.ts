/** Builders for the downloadable artifacts (mask PNG + click log JSON). */

import { UISessionState, clickLog } from "./state.js";

export interface ClickLogExport {
  session_id: string;
  width: number;
  height: number;
  clicks: { x: number; y: number; positive: boolean }[];
  mask_png_base64: string | null;
}

export function buildExport(s: UISessionState): ClickLogExport {
  if (s.sessionId === null) throw new Error("no session to export");
  return {
    session_id: s.sessionId,
    width: s.width,
    height: s.height,
    clicks: clickLog(s),
    mask_png_base64: s.maskPng,
  };
}

export function maskDataUrl(maskPng: string): string {
  return `data:image/png;base64,${maskPng}`;
}

/** Browser-only: trigger a download of the given content. */
export function download(filename: string, content: string, mime: string): void {
  const a = document.createElement("a");
  a.href = content.startsWith("data:") ? content : URL.createObjectURL(new Blob([content], { type: mime }));
  a.download = filename;
  a.click();
}
