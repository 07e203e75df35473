import { ApiClient } from "../api.js";
import { el } from "../dom.js";

export interface GalleryOptions {
  navigate: (hash: string) => void;
}

/**
 * Examples gallery: thumbnail grid of server-side presets; selecting one
 * starts a restoration job without an upload.
 */
export function examplesGallery(client: ApiClient, options: GalleryOptions): HTMLElement {
  const grid = el("div", { class: "gallery-grid", "data-role": "grid" });
  const status = el("p", { class: "message", "data-role": "status" });
  const root = el("section", { class: "gallery" }, [
    el("h2", {}, ["Or try an example"]),
    grid,
    status,
  ]);

  client
    .listExamples()
    .then((examples) => {
      if (examples.length === 0) {
        status.textContent = "No example videos are installed on this server.";
        return;
      }
      for (const example of examples) {
        const tile = el("button", { class: "tile", "data-example": example.example_id }, [
          el("img", { src: example.thumbnail_url, alt: example.title }),
          el("span", {}, [example.title]),
        ]);
        tile.addEventListener("click", async () => {
          tile.setAttribute("disabled", "");
          try {
            const { job_id } = await client.createJob({ example_id: example.example_id });
            options.navigate(`#/jobs/${job_id}`);
          } catch (err) {
            status.textContent = err instanceof Error ? err.message : "could not start job";
            tile.removeAttribute("disabled");
          }
        });
        grid.append(tile);
      }
    })
    .catch((err) => {
      status.textContent =
        err instanceof Error ? `Could not load examples: ${err.message}` : "error";
    });

  return root;
}
