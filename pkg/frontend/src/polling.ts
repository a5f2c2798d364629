/** Fixed-interval job polling that stops on a terminal status. */

import type { ApiClient } from './api';
import type { JobPayload } from './types';

export interface PollHandle {
  stop(): void;
}

export function pollJob(
  api: ApiClient,
  jobId: string,
  onUpdate: (job: JobPayload) => void,
  onError: (message: string) => void,
  intervalMs = 500,
): PollHandle {
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | null = null;

  const tick = () => {
    if (stopped) return;
    api
      .job(jobId)
      .then((job) => {
        if (stopped) return;
        onUpdate(job);
        if (job.status === 'done' || job.status === 'failed') {
          stopped = true;
          return;
        }
        timer = setTimeout(tick, intervalMs);
      })
      .catch((err: unknown) => {
        if (stopped) return;
        stopped = true;
        onError(err instanceof Error ? err.message : String(err));
      });
  };

  tick();
  return {
    stop() {
      stopped = true;
      if (timer !== null) clearTimeout(timer);
    },
  };
}
