import type { AnalysisMode, AnalyzeResponse, DendriteSummary } from "./api";

/** In-memory state of the single-page console; no persistence, no routing. */
export interface UiSessionState {
  sessionId: string | null;
  width: number;
  height: number;
  dendrites: DendriteSummary[];
  thresholdRed: number;
  thresholdGreen: number;
  mode: AnalysisMode;
  /** set only after an analyze round trip; the table renders from this */
  report: AnalyzeResponse | null;
  /** thresholds the displayed report was computed with */
  reportThresholds: { thresholdRed: number; thresholdGreen: number } | null;
  previewUrl: string | null;
}

export function createInitialState(): UiSessionState {
  return {
    sessionId: null,
    width: 0,
    height: 0,
    dendrites: [],
    thresholdRed: 128,
    thresholdGreen: 128,
    mode: "per-dendrite",
    report: null,
    reportThresholds: null,
    previewUrl: null,
  };
}

/** Sliders are hard-clamped to the 8-bit threshold domain. */
export function clampThreshold(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(255, Math.max(0, Math.round(value)));
}
