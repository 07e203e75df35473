import { ApiClient, ApiError, JobRecord } from "./api.js";

export interface PollOptions {
  intervalMs?: number;
  maxIntervalMs?: number;
  onUpdate?: (job: JobRecord) => void;
}

/**
 * Poll a job until it reaches a terminal state (done / failed).
 *
 * Polls at a fixed interval (default 1s), backing off exponentially on
 * transport errors and recovering to the base interval on success. Resolves
 * with the final record; rejects on a failed job or a 404.
 */
export function pollJob(
  client: ApiClient,
  jobId: string,
  options: PollOptions = {},
): Promise<JobRecord> {
  const base = options.intervalMs ?? 1000;
  const max = options.maxIntervalMs ?? 8000;
  let interval = base;

  return new Promise((resolve, reject) => {
    const tick = async () => {
      try {
        const job = await client.getJob(jobId);
        options.onUpdate?.(job);
        interval = base;
        if (job.state === "done") {
          resolve(job);
          return;
        }
        if (job.state === "failed") {
          reject(new Error(job.error ?? "restoration failed"));
          return;
        }
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) {
          reject(err);
          return;
        }
        interval = Math.min(interval * 2, max); // transient: back off and retry
      }
      setTimeout(tick, interval);
    };
    tick();
  });
}
