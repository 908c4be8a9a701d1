/** Pipeline configuration mirrored from the service schema, with the bounds
 * the parameter panel enforces so the client never sends a payload the server
 * would reject. */

export interface PipelineConfig {
  steps_invert: number;
  steps_denoise: number;
  inject_steps: number;
  lambda_init: number;
  lambda_diffusion: number;
  dilation_radius_px: number;
  seed: number;
  use_image_clip: boolean;
  use_init_blend: boolean;
  use_inversion: boolean;
  full_diffusion: boolean;
}

export const DEFAULT_CONFIG: PipelineConfig = {
  steps_invert: 10,
  steps_denoise: 10,
  inject_steps: 5,
  lambda_init: 1.0,
  lambda_diffusion: 0.1,
  dilation_radius_px: 15,
  seed: 0,
  use_image_clip: true,
  use_init_blend: true,
  use_inversion: true,
  full_diffusion: false,
};

export interface ParamBounds {
  min: number;
  max: number;
  step: number;
}

/** Slider ranges for the parameter panel; the knobs the pipeline actually
 * explores, nothing invented. */
export const PARAM_BOUNDS: Record<string, ParamBounds> = {
  steps_invert: { min: 1, max: 50, step: 1 },
  steps_denoise: { min: 1, max: 50, step: 1 },
  inject_steps: { min: 0, max: 50, step: 1 },
  lambda_init: { min: 0, max: 1, step: 0.05 },
  lambda_diffusion: { min: 0, max: 1, step: 0.05 },
  dilation_radius_px: { min: 0, max: 64, step: 1 },
  seed: { min: 0, max: 2 ** 31 - 1, step: 1 },
};

/** Same rules the server enforces; returns human-readable problems. */
export function validateConfig(cfg: PipelineConfig): string[] {
  const problems: string[] = [];
  if (!Number.isInteger(cfg.steps_invert) || cfg.steps_invert < 1) {
    problems.push("steps_invert must be an integer >= 1");
  }
  if (!Number.isInteger(cfg.steps_denoise) || cfg.steps_denoise < 1) {
    problems.push("steps_denoise must be an integer >= 1");
  }
  if (!Number.isInteger(cfg.inject_steps) || cfg.inject_steps < 0 || cfg.inject_steps > cfg.steps_denoise) {
    problems.push("inject_steps must lie in [0, steps_denoise]");
  }
  for (const key of ["lambda_init", "lambda_diffusion"] as const) {
    const v = cfg[key];
    if (!(v >= 0 && v <= 1)) problems.push(`${key} must lie in [0, 1]`);
  }
  if (!Number.isInteger(cfg.dilation_radius_px) || cfg.dilation_radius_px < 0) {
    problems.push("dilation_radius_px must be an integer >= 0");
  }
  if (!Number.isInteger(cfg.seed)) problems.push("seed must be an integer");
  return problems;
}

export function clampToBounds(cfg: PipelineConfig): PipelineConfig {
  const out = { ...cfg };
  for (const [key, b] of Object.entries(PARAM_BOUNDS)) {
    const k = key as keyof PipelineConfig;
    const v = out[k] as number;
    const snapped = Math.min(b.max, Math.max(b.min, v));
    (out as Record<string, unknown>)[k] = b.step === 1 ? Math.round(snapped) : snapped;
  }
  if (out.inject_steps > out.steps_denoise) out.inject_steps = out.steps_denoise;
  return out;
}
