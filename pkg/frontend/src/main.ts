import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import { comparisonView } from "./views/comparison.js";
import { examplesGallery } from "./views/gallery.js";
import { jobView } from "./views/job.js";
import { uploadView } from "./views/upload.js";

/** Hash router: #/ (upload + gallery), #/jobs/:id, #/compare/:videoId. */
export function route(client: ApiClient, hash: string): HTMLElement {
  const navigate = (target: string) => {
    window.location.hash = target;
  };
  const jobMatch = hash.match(/^#\/jobs\/([\w-]+)$/);
  if (jobMatch) {
    return jobView(client, jobMatch[1], { navigate });
  }
  const compareMatch = hash.match(/^#\/compare\/([\w-]+)$/);
  if (compareMatch) {
    return comparisonView(client, compareMatch[1]);
  }
  return el("div", {}, [
    uploadView(client, { navigate }),
    examplesGallery(client, { navigate }),
  ]);
}

export function mount(root: HTMLElement, client = new ApiClient()): void {
  const render = () => {
    clear(root);
    root.append(route(client, window.location.hash));
  };
  window.addEventListener("hashchange", render);
  render();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mount(document.getElementById("app") as HTMLElement);
}
