/**
 * Typed client for the restoration service REST API.
 *
 * Every request the UI makes goes through this module, so the documented
 * endpoint surface is auditable in one place (and contract-tested against a
 * mocked fetch). Only uploadVideo and createJob mutate server state.
 */

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  id: string;
  video_id: string;
  state: JobState;
  progress: number;
  output_ref: string | null;
  error: string | null;
}

export interface VideoMeta {
  video_id: string;
  frames: number;
  fps: number;
  width: number;
  height: number;
}

export interface FramePair {
  index: number;
  original: string;
  restored: string;
}

export interface Comparison {
  original_url: string;
  restored_url: string;
  frames: number;
  fps: number;
  per_frame_pairs: FramePair[];
}

export interface ExampleEntry {
  example_id: string;
  title: string;
  thumbnail_url: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.error === "string") detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

export class ApiClient {
  constructor(
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
    private base = "",
  ) {}

  async uploadVideo(file: File): Promise<{ video_id: string }> {
    const form = new FormData();
    form.append("file", file);
    const response = await this.fetchFn(`${this.base}/api/videos`, {
      method: "POST",
      body: form,
    });
    return parse(response);
  }

  async getVideo(videoId: string): Promise<VideoMeta> {
    return parse(await this.fetchFn(`${this.base}/api/videos/${videoId}`));
  }

  async createJob(
    body: { video_id: string } | { example_id: string },
  ): Promise<{ job_id: string }> {
    const response = await this.fetchFn(`${this.base}/api/jobs`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parse(response);
  }

  async getJob(jobId: string): Promise<JobRecord> {
    return parse(await this.fetchFn(`${this.base}/api/jobs/${jobId}`));
  }

  async getComparison(videoId: string): Promise<Comparison> {
    return parse(
      await this.fetchFn(`${this.base}/api/videos/${videoId}/comparison`),
    );
  }

  async listExamples(): Promise<ExampleEntry[]> {
    return parse(await this.fetchFn(`${this.base}/api/examples`));
  }

  /** Direct download URL; the download button links here verbatim. */
  restoredUrl(videoId: string): string {
    return `${this.base}/api/videos/${videoId}/restored`;
  }
}
