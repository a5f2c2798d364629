/** Live prediction loop: debounced edits, at most one request in flight.
 *
 * While a request is airborne the newest counts wait in `pending`; when the
 * response lands, only the latest pending edit is sent. Stale responses are
 * dropped, so the overlay always reflects the newest edit.
 */

import type { ApiClient } from './api';
import type { Prediction } from './types';
import { debounce } from './debounce';

export interface PredictLoopCallbacks {
  onResult(counts: number[], prediction: Prediction): void;
  onError(message: string, status?: number): void;
}

export class PredictLoop {
  private pending: number[] | null = null;
  private flying = false;
  private seq = 0;
  private readonly schedule: ((counts: number[]) => void) & { cancel(): void };
  inFlightRequests = 0; // total requests issued, for tests and diagnostics

  constructor(
    private api: ApiClient,
    private callbacks: PredictLoopCallbacks,
    delayMs = 300,
  ) {
    this.schedule = debounce((counts: number[]) => this.submit(counts), delayMs);
  }

  /** Called on every count edit. */
  edit(counts: number[]): void {
    this.schedule([...counts]);
  }

  get inFlight(): boolean {
    return this.flying;
  }

  private submit(counts: number[]): void {
    if (this.flying) {
      this.pending = counts; // latest edit wins
      return;
    }
    this.flying = true;
    this.inFlightRequests += 1;
    const ticket = ++this.seq;
    this.api
      .predict(counts)
      .then((prediction) => {
        if (ticket === this.seq) this.callbacks.onResult(counts, prediction);
      })
      .catch((err: unknown) => {
        const status = (err as { status?: number }).status;
        this.callbacks.onError(err instanceof Error ? err.message : String(err), status);
      })
      .finally(() => {
        this.flying = false;
        if (this.pending !== null) {
          const next = this.pending;
          this.pending = null;
          this.submit(next);
        }
      });
  }
}
