/** Session state for the studio: loaded images, placement, mask edits,
 * parameter panel, and the append-only history of runs. Each completed run
 * feeds the side-by-side comparison for the next adjustment. */

import type { ComposeClient, JobRecord } from "./api.js";
import type { Placement } from "./placement.js";
import { clampPlacement, type Size } from "./placement.js";
import type { MaskRaster } from "./mask.js";
import { DEFAULT_CONFIG, type PipelineConfig, validateConfig } from "./types.js";

export type EntryState = "pending" | "done" | "failed" | "cancelled";

export interface HistoryEntry {
  jobId: string;
  configHash: string;
  state: EntryState;
  params: PipelineConfig;
  placement: Placement;
  prompt?: string;
  error?: string;
  resultUrl?: string;
}

export interface LoadedImage {
  blob: Blob;
  size: Size;
}

export class StudioSession {
  bg?: LoadedImage;
  fg?: LoadedImage;
  fgMaskBlob?: Blob;
  editedMask?: MaskRaster;
  placement: Placement = { offsetX: 0, offsetY: 0, scale: 1.0 };
  params: PipelineConfig = { ...DEFAULT_CONFIG };
  prompt = ""; // empty prompt = null-prompt mode
  private entries: HistoryEntry[] = [];

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  loadImages(bg: LoadedImage, fg: LoadedImage): void {
    this.bg = bg;
    this.fg = fg;
  }

  /** Drag handler: placements are clamped into the frame, never rejected
   * silently. Returns true when the gesture had to be clamped. */
  place(p: Placement): boolean {
    if (!this.bg || !this.fg) throw new Error("load both images before placing");
    const { placement, clamped } = clampPlacement(
      p,
      this.bg.size,
      this.fg.size,
    );
    this.placement = placement;
    return clamped;
  }

  validateReadyToSubmit(): string[] {
    const problems = validateConfig(this.params);
    if (!this.bg) problems.push("background image not loaded");
    if (!this.fg) problems.push("foreground image not loaded");
    if (!this.fgMaskBlob) problems.push("foreground mask not set");
    return problems;
  }

  /** Submit the current state, poll to completion, and append the outcome to
   * history. Entries are frozen once they reach a terminal state. */
  async runAndCompare(
    client: ComposeClient,
    onProgress?: (record: JobRecord) => void,
  ): Promise<HistoryEntry> {
    const problems = this.validateReadyToSubmit();
    if (problems.length) throw new Error(`not ready to submit: ${problems.join("; ")}`);

    const submitted = await client.submitJob({
      bg: this.bg!.blob,
      fg: this.fg!.blob,
      fgMask: this.fgMaskBlob!,
      placement: this.placement,
      config: this.params,
      prompt: this.prompt || undefined,
    });

    const entry: HistoryEntry = {
      jobId: submitted.job_id,
      configHash: submitted.config_hash,
      state: "pending",
      params: { ...this.params },
      placement: { ...this.placement },
      prompt: this.prompt || undefined,
    };
    this.entries.push(entry);

    const record = await client.waitForCompletion(submitted.job_id, {}, onProgress);
    if (record.state === "done") {
      entry.state = "done";
      entry.resultUrl = client.resultUrl(entry.jobId);
    } else {
      entry.state = record.error === "cancelled" ? "cancelled" : "failed";
      entry.error = record.error ?? undefined;
    }
    Object.freeze(entry);
    return entry;
  }

  async cancelEntry(client: ComposeClient, entry: HistoryEntry): Promise<void> {
    if (entry.state !== "pending") throw new Error("only pending runs can be cancelled");
    await client.cancel(entry.jobId);
  }

  /** Pick any two history entries for the side-by-side view. */
  compare(a: number, b: number): [HistoryEntry, HistoryEntry] {
    const ea = this.entries[a];
    const eb = this.entries[b];
    if (!ea || !eb) throw new Error("history index out of range");
    return [ea, eb];
  }
}
