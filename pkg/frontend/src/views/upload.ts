import { ApiClient } from "../api.js";
import { el } from "../dom.js";

export interface UploadOptions {
  maxUploadBytes?: number;
  navigate: (hash: string) => void;
}

const DEFAULT_LIMIT = 500 * 1024 * 1024;

/**
 * Upload view: drag-drop or file-pick, client-side size check (oversize files
 * are rejected before any network call), then upload + job creation and
 * navigation to the job view.
 */
export function uploadView(client: ApiClient, options: UploadOptions): HTMLElement {
  const limit = options.maxUploadBytes ?? DEFAULT_LIMIT;

  const message = el("p", { class: "message", "data-role": "message" });
  const progress = el("progress", { max: "1", value: "0", hidden: "" });
  const input = el("input", {
    type: "file",
    accept: "video/*,.zip",
    "data-role": "file-input",
  });
  const retry = el("button", { class: "retry", hidden: "", "data-role": "retry" }, [
    "Retry",
  ]);

  let lastFile: File | null = null;

  async function submit(file: File): Promise<void> {
    message.textContent = "";
    retry.hidden = true;
    if (file.size > limit) {
      message.textContent = `File is too large (${(file.size / 1e6).toFixed(0)} MB; ` +
        `limit ${(limit / 1e6).toFixed(0)} MB).`;
      return;
    }
    lastFile = file;
    progress.hidden = false;
    progress.value = 0.2;
    try {
      const { video_id } = await client.uploadVideo(file);
      progress.value = 0.8;
      const { job_id } = await client.createJob({ video_id });
      progress.value = 1;
      options.navigate(`#/jobs/${job_id}`);
    } catch (err) {
      progress.hidden = true;
      message.textContent = err instanceof Error ? err.message : "Upload failed.";
      retry.hidden = false;
    }
  }

  input.addEventListener("change", () => {
    if (input.files && input.files[0]) void submit(input.files[0]);
  });
  retry.addEventListener("click", () => {
    if (lastFile) void submit(lastFile);
  });

  const dropzone = el("div", { class: "dropzone", "data-role": "dropzone" }, [
    el("p", {}, ["Drop a degraded video (or a zip of frames) here, or"]),
    input,
  ]);
  dropzone.addEventListener("dragover", (event) => event.preventDefault());
  dropzone.addEventListener("drop", (event) => {
    event.preventDefault();
    const file = event.dataTransfer?.files?.[0];
    if (file) void submit(file);
  });

  return el("section", { class: "upload-view" }, [
    el("h2", {}, ["Restore a video"]),
    dropzone,
    progress,
    message,
    retry,
  ]);
}
