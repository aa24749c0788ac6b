// Bounding-box overlay geometry and drawing. The math is pure scaling from
// the image's natural pixel grid to its displayed size, so resizing the
// window preserves every box's relative position.

import type { FrameDetection } from "./api.js";

export type Size = { width: number; height: number };
export type Rect = { x: number; y: number; w: number; h: number };

export function scaleBox(box: Rect, natural: Size, display: Size): Rect {
  const sx = display.width / natural.width;
  const sy = display.height / natural.height;
  return { x: box.x * sx, y: box.y * sy, w: box.w * sx, h: box.h * sy };
}

export function largestIndex(detections: readonly { w: number; h: number }[]): number {
  let best = -1;
  let bestArea = -Infinity;
  detections.forEach((d, i) => {
    const area = d.w * d.h;
    if (area > bestArea) {
      bestArea = area;
      best = i;
    }
  });
  return best;
}

export const BOX_COLOR = "#ff5fa2";
export const HIGHLIGHT_COLOR = "#ff1177";

export function drawOverlays(
  ctx: CanvasRenderingContext2D,
  detections: FrameDetection[],
  natural: Size,
  display: Size,
): void {
  ctx.clearRect(0, 0, display.width, display.height);
  const highlight = largestIndex(detections);
  detections.forEach((d, i) => {
    const r = scaleBox(d, natural, display);
    ctx.lineWidth = i === highlight ? 3 : 2;
    ctx.strokeStyle = i === highlight ? HIGHLIGHT_COLOR : BOX_COLOR;
    ctx.strokeRect(r.x, r.y, r.w, r.h);
    const label = `${Math.round(d.w * d.h).toLocaleString()} px²`;
    ctx.font = "12px system-ui, sans-serif";
    const width = ctx.measureText(label).width + 8;
    ctx.fillStyle = "rgba(0, 0, 0, 0.65)";
    ctx.fillRect(r.x, Math.max(0, r.y - 16), width, 16);
    ctx.fillStyle = "#fff";
    ctx.fillText(label, r.x + 4, Math.max(12, r.y - 4));
  });
}
