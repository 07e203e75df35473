import { Comparison } from "./api.js";

/**
 * State of the synced side-by-side comparison: one shared frame index drives
 * both panes (frames are rendered as images, never free-running videos, so
 * the panes cannot drift), and a wipe fraction controls how much of the
 * restored pane overlays the original.
 */
export class ComparisonState {
  frame = 0;
  wipe = 0.5;

  constructor(public comparison: Comparison) {}

  get frameCount(): number {
    return this.comparison.per_frame_pairs.length;
  }

  step(delta: number): number {
    this.frame = Math.min(Math.max(this.frame + delta, 0), this.frameCount - 1);
    return this.frame;
  }

  setWipe(fraction: number): number {
    this.wipe = Math.min(Math.max(fraction, 0), 1);
    return this.wipe;
  }

  /** Both URLs always come from the same pair: index-synced by construction. */
  currentPair(): { original: string; restored: string; index: number } {
    const pair = this.comparison.per_frame_pairs[this.frame];
    return { original: pair.original, restored: pair.restored, index: pair.index };
  }

  /**
   * Width of the restored overlay as a percentage. At 0 the overlay vanishes
   * (pure original); at 1 it covers the full pane (pure restored).
   */
  restoredOverlayPercent(): number {
    return this.wipe * 100;
  }
}
