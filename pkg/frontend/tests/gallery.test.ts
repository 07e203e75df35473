import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { examplesGallery } from "../src/views/gallery.js";
import { route } from "../src/main.js";
import { MockService, assertOnlyDocumented, assertReadOnlyExcept, flush } from "./mock_service.js";

const EXAMPLES = [
  { example_id: "demo-tape", title: "demo tape", thumbnail_url: "/api/examples/demo-tape/thumbnail" },
  { example_id: "newsreel", title: "newsreel", thumbnail_url: "/api/examples/newsreel/thumbnail" },
];

describe("examples gallery", () => {
  it("renders one tile per example", async () => {
    const service = new MockService().json("GET", /^\/api\/examples$/, EXAMPLES);
    const view = examplesGallery(new ApiClient(service.fetch), { navigate: () => {} });
    await flush();
    expect(view.querySelectorAll(".tile").length).toBe(2);
    assertOnlyDocumented(service.calls);
  });

  it("clicking a tile starts a job and navigates", async () => {
    const service = new MockService()
      .json("GET", /^\/api\/examples$/, EXAMPLES)
      .json("POST", /^\/api\/jobs$/, { job_id: "j7" }, 201);
    const visited: string[] = [];
    const view = examplesGallery(new ApiClient(service.fetch), {
      navigate: (hash) => visited.push(hash),
    });
    await flush();
    view.querySelector<HTMLButtonElement>("[data-example=demo-tape]")!
      .dispatchEvent(new Event("click"));
    await flush();
    expect(visited).toEqual(["#/jobs/j7"]);
    const post = service.calls.find((c) => c.method === "POST");
    expect(post?.path).toBe("/api/jobs");
    assertOnlyDocumented(service.calls);
    assertReadOnlyExcept(service.calls);
  });

  it("explains an empty gallery", async () => {
    const service = new MockService().json("GET", /^\/api\/examples$/, []);
    const view = examplesGallery(new ApiClient(service.fetch), { navigate: () => {} });
    await flush();
    expect(view.querySelector("[data-role=status]")!.textContent)
      .toContain("No example videos");
  });

  it("shows an error state when the listing fails", async () => {
    const service = new MockService().on("GET", /^\/api\/examples$/,
                                         () => new Error("service down"));
    const view = examplesGallery(new ApiClient(service.fetch), { navigate: () => {} });
    await flush();
    expect(view.querySelector("[data-role=status]")!.textContent)
      .toContain("service down");
  });
});

describe("router", () => {
  it("renders every view against the mocked service only", async () => {
    const service = new MockService()
      .json("GET", /^\/api\/examples$/, EXAMPLES)
      .json("GET", /^\/api\/jobs\/j1$/, {
        id: "j1", video_id: "v1", state: "done", progress: 1,
        output_ref: "v1/restored", error: null,
      })
      .json("GET", /^\/api\/videos\/v1\/comparison$/, {
        original_url: "/api/videos/v1/frames/0?variant=original",
        restored_url: "/api/videos/v1/restored",
        frames: 1, fps: 25,
        per_frame_pairs: [{
          index: 0,
          original: "/api/videos/v1/frames/0?variant=original",
          restored: "/api/videos/v1/frames/0?variant=restored",
        }],
      });
    const client = new ApiClient(service.fetch);
    for (const hash of ["#/", "#/jobs/j1", "#/compare/v1"]) {
      const view = route(client, hash);
      expect(view).toBeInstanceOf(HTMLElement);
    }
    await flush();
    await flush();
    assertOnlyDocumented(service.calls);
    assertReadOnlyExcept(service.calls);
  });
});
