import type { MixParams, RenderResult } from './types.js';

export type MixSend = (params: MixParams, signal: AbortSignal) => Promise<RenderResult>;

export interface ScheduledOutcome {
  result?: RenderResult;
  error?: Error;
  superseded: boolean;
}

// Debounced single-flight dispatcher for /api/mix. Slider drags call
// schedule() on every tick; only the value standing after the debounce
// window is sent, and a newer schedule aborts an already-running request.
// The backend has one worker, so at most one mix is ever in flight.
export class MixScheduler {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private pendingResolve: ((o: ScheduledOutcome) => void) | null = null;
  private inflight: AbortController | null = null;
  private generation = 0;

  constructor(
    private send: MixSend,
    private delayMs = 250,
  ) {}

  schedule(params: MixParams): Promise<ScheduledOutcome> {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    // a waiter whose debounce window never fired was superseded
    this.pendingResolve?.({ superseded: true });

    return new Promise<ScheduledOutcome>((resolve) => {
      this.pendingResolve = resolve;
      this.timer = setTimeout(() => {
        this.timer = null;
        this.pendingResolve = null;
        void this.fire(params, resolve);
      }, this.delayMs);
    });
  }

  private async fire(params: MixParams, resolve: (o: ScheduledOutcome) => void): Promise<void> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const generation = ++this.generation;
    try {
      const result = await this.send(params, controller.signal);
      if (generation !== this.generation) {
        resolve({ superseded: true });
        return;
      }
      resolve({ result, superseded: false });
    } catch (err) {
      if (controller.signal.aborted) {
        resolve({ superseded: true });
        return;
      }
      resolve({ error: err instanceof Error ? err : new Error(String(err)), superseded: false });
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  // Pending (not yet fired) work only; an in-flight request keeps running.
  cancelPending(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.pendingResolve?.({ superseded: true });
    this.pendingResolve = null;
  }
}
