import { ApiClient, ApiError, JobRecord } from "../api.js";
import { el } from "../dom.js";
import { pollJob } from "../poller.js";

export interface JobViewOptions {
  navigate: (hash: string) => void;
  intervalMs?: number;
}

/**
 * Job view: live status via polling; moves to the comparison view when the
 * job completes, shows the job's error message when it fails.
 */
export function jobView(
  client: ApiClient,
  jobId: string,
  options: JobViewOptions,
): HTMLElement {
  const state = el("p", { class: "job-state", "data-role": "state" }, ["loading"]);
  const bar = el("progress", { max: "1", value: "0", "data-role": "progress" });
  const error = el("p", { class: "error", hidden: "", "data-role": "error" });

  const render = (job: JobRecord) => {
    state.textContent = job.state;
    bar.value = job.progress;
  };

  pollJob(client, jobId, { intervalMs: options.intervalMs ?? 1000, onUpdate: render })
    .then((job) => options.navigate(`#/compare/${job.video_id}`))
    .catch((err) => {
      if (err instanceof ApiError && err.status === 404) {
        state.textContent = "not found";
        error.textContent = `No job with id ${jobId}.`;
      } else {
        state.textContent = "failed";
        error.textContent = err instanceof Error ? err.message : String(err);
      }
      error.hidden = false;
    });

  return el("section", { class: "job-view" }, [
    el("h2", {}, ["Restoration job"]),
    el("p", { class: "job-id" }, [jobId]),
    state,
    bar,
    error,
  ]);
}
