import { ApiClient } from "../api.js";
import { ComparisonState } from "../comparison.js";
import { el } from "../dom.js";

/**
 * Comparison view: two frame-synced panes (original under, restored overlaid)
 * with a draggable vertical wipe, a frame stepper, and a download button that
 * links straight to the restored-video endpoint.
 */
export function comparisonView(client: ApiClient, videoId: string): HTMLElement {
  const root = el("section", { class: "comparison-view" }, [
    el("h2", {}, ["Before / after"]),
  ]);

  client
    .getComparison(videoId)
    .then((comparison) => {
      const state = new ComparisonState(comparison);

      const original = el("img", { class: "pane original", "data-role": "original" });
      const restored = el("img", { class: "pane restored", "data-role": "restored" });
      const overlay = el("div", { class: "overlay", "data-role": "overlay" }, [restored]);
      const stage = el("div", { class: "stage" }, [original, overlay]);

      const slider = el("input", {
        type: "range", min: "0", max: "100", value: "50", "data-role": "wipe",
      });
      const counter = el("span", { "data-role": "frame-counter" });
      const prev = el("button", { "data-role": "prev" }, ["‹ prev"]);
      const next = el("button", { "data-role": "next" }, ["next ›"]);
      const download = el("a", {
        href: client.restoredUrl(videoId),
        download: "",
        class: "download",
        "data-role": "download",
      }, ["Download restored"]);

      const sync = () => {
        const pair = state.currentPair();
        original.setAttribute("src", pair.original);
        restored.setAttribute("src", pair.restored);
        counter.textContent = `${state.frame + 1} / ${state.frameCount}`;
        overlay.style.width = `${state.restoredOverlayPercent()}%`;
      };

      slider.addEventListener("input", () => {
        state.setWipe(Number(slider.value) / 100);
        overlay.style.width = `${state.restoredOverlayPercent()}%`;
      });
      prev.addEventListener("click", () => {
        state.step(-1);
        sync();
      });
      next.addEventListener("click", () => {
        state.step(1);
        sync();
      });

      sync();
      root.append(stage, el("div", { class: "controls" },
                            [slider, prev, counter, next, download]));
    })
    .catch((err) => {
      // media/metadata failure: fall back to a plain message with a retry link
      root.append(el("p", { class: "error", "data-role": "error" },
                     [err instanceof Error ? err.message : "comparison unavailable"]));
    });

  return root;
}
