// View-state logic kept free of the DOM so it can be unit tested: slider
// clamping, paging, gallery filtering, slider debouncing, and the dev-mode
// monotonicity check (more threshold can never mean more flagged frames).

import type { FrameRow, Verdict } from "./api.js";

export type Filter = "all" | "flagged" | Verdict;

export type ViewState = {
  runId: string | null;
  threshold: number;
  maxArea: number;
  page: number;
  size: number;
  filter: Filter;
  selected: string | null;
};

export function initialState(): ViewState {
  return {
    runId: null,
    threshold: 0,
    maxArea: 0,
    page: 1,
    size: 50,
    filter: "all",
    selected: null,
  };
}

// Slider bounds are [0, max area in the run].
export function clampThreshold(value: number, maxArea: number): number {
  if (!Number.isFinite(value) || value < 0) return 0;
  return Math.min(value, Math.max(maxArea, 0));
}

export function pageCount(total: number, size: number): number {
  return Math.max(1, Math.ceil(total / size));
}

export function clampPage(page: number, total: number, size: number): number {
  if (!Number.isFinite(page) || page < 1) return 1;
  return Math.min(Math.floor(page), pageCount(total, size));
}

export function visibleFrames(rows: FrameRow[], filter: Filter): FrameRow[] {
  switch (filter) {
    case "all":
      return rows;
    case "flagged":
      return rows.filter((r) => r.flagged);
    default:
      return rows.filter((r) => r.verdict === filter);
  }
}

// Which frame to select after moving by delta within the visible list.
export function neighbourFrame(
  rows: FrameRow[],
  selected: string | null,
  delta: 1 | -1,
): string | null {
  if (rows.length === 0) return null;
  const index = rows.findIndex((r) => r.frame_id === selected);
  if (index < 0) return rows[0].frame_id;
  const next = Math.min(rows.length - 1, Math.max(0, index + delta));
  return rows[next].frame_id;
}

// Trailing-edge debounce for the slider: intermediate positions may be
// dropped, but the final position always resolves to exactly one call.
export class Debouncer<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pending: T | undefined;

  constructor(
    private readonly delayMs: number,
    private readonly fn: (value: T) => void,
  ) {}

  push(value: T): void {
    this.pending = value;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => this.fire(), this.delayMs);
  }

  flush(): void {
    if (this.timer !== null) this.fire();
  }

  cancel(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    this.pending = undefined;
  }

  private fire(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
    const value = this.pending as T;
    this.pending = undefined;
    this.fn(value);
  }
}

export type SweepPoint = { threshold: number; flagged: number };

// Dev-mode invariant: sorted by threshold, flagged counts must be
// non-increasing. Returns the violating pair message or null.
export function monotonicityViolation(history: SweepPoint[]): string | null {
  const sorted = [...history].sort((a, b) => a.threshold - b.threshold);
  for (let i = 1; i < sorted.length; i++) {
    const lo = sorted[i - 1];
    const hi = sorted[i];
    if (hi.flagged > lo.flagged) {
      return (
        `flagged count rose from ${lo.flagged} at threshold ${lo.threshold} ` +
        `to ${hi.flagged} at ${hi.threshold}`
      );
    }
  }
  return null;
}

export function assertMonotone(history: SweepPoint[]): void {
  const violation = monotonicityViolation(history);
  if (violation !== null) throw new Error("monotonicity violated: " + violation);
}
