/** Typed client for the composition service's /v1 endpoints. */

import type { Placement } from "./placement.js";
import type { PipelineConfig } from "./types.js";
import { validateConfig } from "./types.js";

export interface JobRecord {
  job_id: string;
  state: "queued" | "running" | "done" | "failed";
  config_hash: string;
  progress: { stage: string; step: number };
  result_paths: Record<string, string>;
  error: string | null;
}

export interface SubmitResponse {
  job_id: string;
  config_hash: string;
  state: string;
}

export interface JobUpload {
  bg: Blob;
  fg: Blob;
  fgMask: Blob;
  bgBox?: Blob;
  placement: Placement;
  config: PipelineConfig;
  prompt?: string;
  force?: boolean;
}

export class ServiceError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function expectOk(resp: Response): Promise<Response> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ServiceError(resp.status, detail);
  }
  return resp;
}

export class ComposeClient {
  constructor(private baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl.replace(/\/$/, "")}${path}`;
  }

  async healthz(): Promise<{ status: string; backbone: string }> {
    const resp = await expectOk(await fetch(this.url("/v1/healthz")));
    return resp.json();
  }

  async presets(): Promise<{ config: PipelineConfig; backbone: string }> {
    const resp = await expectOk(await fetch(this.url("/v1/presets")));
    return resp.json();
  }

  /** Client-side validation mirrors the server schema; invalid payloads never
   * leave the browser. */
  async submitJob(upload: JobUpload): Promise<SubmitResponse> {
    const problems = validateConfig(upload.config);
    if (problems.length) throw new ServiceError(0, `invalid config: ${problems.join("; ")}`);

    const form = new FormData();
    form.set("bg", upload.bg, "bg.png");
    form.set("fg", upload.fg, "fg.png");
    form.set("fg_mask", upload.fgMask, "fg_mask.png");
    if (upload.bgBox) form.set("bg_box", upload.bgBox, "bg_box.png");
    form.set("offset_x", String(upload.placement.offsetX));
    form.set("offset_y", String(upload.placement.offsetY));
    form.set("scale", String(upload.placement.scale));
    const params: Record<string, unknown> = { ...upload.config };
    if (upload.prompt) params.prompt = upload.prompt;
    form.set("params", JSON.stringify(params));
    if (upload.force) form.set("force", "true");

    const resp = await expectOk(await fetch(this.url("/v1/jobs"), { method: "POST", body: form }));
    return resp.json();
  }

  async getJob(jobId: string): Promise<JobRecord> {
    const resp = await expectOk(await fetch(this.url(`/v1/jobs/${jobId}`)));
    return resp.json();
  }

  async waitForCompletion(
    jobId: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
    onProgress?: (record: JobRecord) => void,
  ): Promise<JobRecord> {
    const interval = opts.intervalMs ?? 100;
    const deadline = Date.now() + (opts.timeoutMs ?? 60_000);
    for (;;) {
      const record = await this.getJob(jobId);
      onProgress?.(record);
      if (record.state === "done" || record.state === "failed") return record;
      if (Date.now() > deadline) throw new ServiceError(0, `job ${jobId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }

  resultUrl(jobId: string): string {
    return this.url(`/v1/jobs/${jobId}/result`);
  }

  previewUrl(jobId: string): string {
    return this.url(`/v1/jobs/${jobId}/preview`);
  }

  async fetchResult(jobId: string): Promise<ArrayBuffer> {
    const resp = await expectOk(await fetch(this.resultUrl(jobId)));
    return resp.arrayBuffer();
  }

  async fetchPreview(jobId: string): Promise<ArrayBuffer> {
    const resp = await expectOk(await fetch(this.previewUrl(jobId)));
    return resp.arrayBuffer();
  }

  async cancel(jobId: string): Promise<JobRecord> {
    const resp = await expectOk(await fetch(this.url(`/v1/jobs/${jobId}`), { method: "DELETE" }));
    return resp.json();
  }
}
