/**
 * Letterbox geometry shared with the canvas stage.
 *
 * The stage is a square of `side` CSS pixels; the image is scaled to fit
 * and centered, mirroring the transform the server applies to model
 * inputs. Display-to-image mapping is the exact inverse of that
 * placement.
 */

export interface Letterbox {
  scale: number;
  ox: number;
  oy: number;
  cw: number;
  ch: number;
}

export function letterbox(width: number, height: number, side: number): Letterbox {
  const scale = side / Math.max(width, height);
  const cw = Math.max(1, Math.round(width * scale));
  const ch = Math.max(1, Math.round(height * scale));
  return {
    scale,
    cw,
    ch,
    ox: Math.floor((side - cw) / 2),
    oy: Math.floor((side - ch) / 2),
  };
}

/** Stage pixel -> image pixel, or null when the point lands on padding. */
export function displayToImage(
  px: number,
  py: number,
  lb: Letterbox,
  width: number,
  height: number,
): { x: number; y: number } | null {
  const rx = px - lb.ox;
  const ry = py - lb.oy;
  if (rx < 0 || ry < 0 || rx >= lb.cw || ry >= lb.ch) return null;
  return {
    x: Math.min(width - 1, Math.max(0, Math.floor(rx / lb.scale))),
    y: Math.min(height - 1, Math.max(0, Math.floor(ry / lb.scale))),
  };
}

/** Image pixel -> stage pixel (center of the source pixel's footprint). */
export function imageToDisplay(x: number, y: number, lb: Letterbox): { px: number; py: number } {
  return {
    px: lb.ox + (x + 0.5) * lb.scale,
    py: lb.oy + (y + 0.5) * lb.scale,
  };
}
