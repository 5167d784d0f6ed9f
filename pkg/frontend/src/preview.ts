/**
 * Debounced, race-safe preview refresh.
 *
 * Slider moves funnel through a 200 ms trailing debounce; each request
 * carries a monotonically increasing sequence number and a response is
 * applied only if nothing newer has been applied yet (last write wins),
 * so rapid scrubbing can never leave a stale image on screen. A failed
 * fetch is retried once before surfacing the error.
 */

import { debounce, type Debounced } from "./debounce";

export const PREVIEW_DEBOUNCE_MS = 200;

export interface AppliedPreview {
  blob: Blob;
  thresholdRed: number;
  thresholdGreen: number;
}

export class PreviewLoop {
  private sequence = 0;
  private appliedSequence = 0;
  private readonly schedule: Debounced<[number, number]>;
  /** thresholds used by the most recent request (what the image shows once settled) */
  lastRequested: { thresholdRed: number; thresholdGreen: number } | null = null;

  constructor(
    private readonly fetchPreview: (tr: number, tg: number) => Promise<Blob>,
    private readonly apply: (preview: AppliedPreview) => void,
    private readonly onError: (error: unknown) => void,
    delayMs: number = PREVIEW_DEBOUNCE_MS,
  ) {
    this.schedule = debounce((tr: number, tg: number) => {
      void this.request(tr, tg);
    }, delayMs);
  }

  /** Call on every slider move; collapses bursts into one request. */
  set(thresholdRed: number, thresholdGreen: number): void {
    this.schedule(thresholdRed, thresholdGreen);
  }

  /** Issue a request immediately, bypassing the debounce (e.g. first render). */
  refreshNow(thresholdRed: number, thresholdGreen: number): Promise<void> {
    this.schedule.cancel();
    return this.request(thresholdRed, thresholdGreen);
  }

  cancel(): void {
    this.schedule.cancel();
  }

  private async request(tr: number, tg: number): Promise<void> {
    const ticket = ++this.sequence;
    this.lastRequested = { thresholdRed: tr, thresholdGreen: tg };
    let blob: Blob;
    try {
      blob = await this.fetchPreview(tr, tg);
    } catch {
      try {
        blob = await this.fetchPreview(tr, tg); // one retry for transient failures
      } catch (error) {
        if (ticket > this.appliedSequence) this.onError(error);
        return;
      }
    }
    if (ticket <= this.appliedSequence) return; // a newer response already landed
    this.appliedSequence = ticket;
    this.apply({ blob, thresholdRed: tr, thresholdGreen: tg });
  }
}
